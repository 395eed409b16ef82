#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <string>
#include <vector>

namespace terranav {

// Rigid transform. For camera poses the convention is camera-to-world:
// rotation() maps camera coordinates into the world frame and translation()
// is the camera center. The nadir camera frame is x east, y south, z down
// (right-handed, optical axis along +z depth).
struct PoseSE3 {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
        return rotation * p + translation;
    }
    PoseSE3 inverse() const {
        PoseSE3 r;
        r.rotation = rotation.transpose();
        r.translation = -(rotation.transpose() * translation);
        return r;
    }
    PoseSE3 operator*(const PoseSE3& rhs) const {
        PoseSE3 r;
        r.rotation = rotation * rhs.rotation;
        r.translation = rotation * rhs.translation + translation;
        return r;
    }

    // Throws std::invalid_argument when R is not orthonormal with det +1
    // within 1e-9.
    void validate() const;
};

// Constant nadir attitude: camera x = east, y = south, z = down.
PoseSE3 nadir_pose(const Eigen::Vector3d& position);

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w);
Eigen::Vector3d so3_log(const Eigen::Matrix3d& R);
Eigen::Matrix3d skew(const Eigen::Vector3d& v);

// Local perturbation used by the optimizer and the Jacobian checks: with
// T_cw = pose^-1 (world-to-camera), applies T_cw <- [exp(w), nu] * T_cw and
// returns the updated camera-to-world pose. xi = (w, nu), rotation first.
PoseSE3 retract_pose(const PoseSE3& pose_wc, const Eigen::Matrix<double, 6, 1>& xi);

// Timestamped camera pose, the unit of trajectory files.
struct StampedPose {
    double t = 0.0;
    PoseSE3 pose;
};

// Position-only trajectory sample sequence with a frame label.
struct Trajectory {
    std::vector<double> stamps;
    std::vector<Eigen::Vector3d> positions;
    std::string frame = "world";  // "world" or "vo"

    void push(double t, const Eigen::Vector3d& p) {
        stamps.push_back(t);
        positions.push_back(p);
    }
    size_t size() const { return stamps.size(); }
};

Trajectory trajectory_from_poses(const std::vector<StampedPose>& poses,
                                 const std::string& frame);

// TUM format: "timestamp tx ty tz qx qy qz qw" per line.
void save_tum(const std::string& path, const std::vector<StampedPose>& poses);
std::vector<StampedPose> load_tum(const std::string& path);

}  // namespace terranav
