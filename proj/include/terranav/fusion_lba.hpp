#pragma once

#include <Eigen/Core>
#include <map>
#include <vector>

#include "terranav/georef.hpp"
#include "terranav/se3.hpp"
#include "terranav/vo.hpp"

// Trajectory-frame alignment and the windowed bundle adjustment that fuses
// reprojection residuals with geo-referencing residuals, solved by
// Levenberg-Marquardt.
//
// Cost: f(x) = 1/2 sum_ij e_ij^T w_i e_ij + 1/2 sum_i eG_i^T wG_i eG_i, with
// e_ij the signed reprojection error (projection minus measurement) and eG_i
// the signed position deviation (fix minus pose position). Poses are locally
// parameterized as xi = (omega, nu) applied on the world-to-camera transform
// from the left (see retract_pose).

namespace terranav {

struct FrameTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double scale = 1.0;  // 1 unless similarity mode is requested

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
        return scale * (rotation * p) + translation;
    }
    Eigen::Vector3d apply_inverse(const Eigen::Vector3d& p) const {
        return (rotation.transpose() * (p - translation)) / scale;
    }
    PoseSE3 apply(const PoseSE3& pose) const {
        PoseSE3 out;
        out.rotation = rotation * pose.rotation;
        out.translation = apply(pose.translation);
        return out;
    }
    void validate() const;
};

// Least-squares rigid (or similarity) transform H minimizing
// sum |fix_i - H(vo_i)|^2, closed form via centroids and SVD. Throws on
// fewer than 3 pairs or a collinear configuration.
FrameTransform align_trajectories(const std::vector<Eigen::Vector3d>& vo_positions,
                                  const std::vector<Eigen::Vector3d>& fix_positions,
                                  bool with_scale = false);

// Pairs VO keyframe positions with accepted fixes by keyframe id.
FrameTransform align_trajectories(const std::vector<std::pair<int, Eigen::Vector3d>>& vo_kf,
                                  const std::vector<GeoFix>& fixes,
                                  bool with_scale = false);

// --- Residuals ---------------------------------------------------------------

// e = projection(pose, point) - observation; valid == false when the point
// has non-positive depth (such residuals enter with zero weight).
struct ReprojResidual {
    Eigen::Vector2d e = Eigen::Vector2d::Zero();
    Eigen::Matrix<double, 2, 6> J_pose = Eigen::Matrix<double, 2, 6>::Zero();
    Eigen::Matrix<double, 2, 3> J_point = Eigen::Matrix<double, 2, 3>::Zero();
    bool valid = false;
};

Eigen::Vector2d reprojection_residual(const PoseSE3& pose, const Eigen::Vector3d& point,
                                      const Eigen::Vector2d& obs, const CameraModel& camera,
                                      bool* valid = nullptr);
ReprojResidual reprojection_residual_jacobians(const PoseSE3& pose,
                                               const Eigen::Vector3d& point,
                                               const Eigen::Vector2d& obs,
                                               const CameraModel& camera);

// eG = fix_position - pose_position (signed; the squared norm equals the
// absolute-value form of the fused cost).
Eigen::Vector3d geo_residual(const Eigen::Vector3d& pose_position,
                             const Eigen::Vector3d& fix_position);
// d eG / d xi for the local pose parameterization; rotation block is zero
// (a position fix does not constrain attitude).
Eigen::Matrix<double, 3, 6> geo_residual_jacobian(const PoseSE3& pose);

// --- Problem -----------------------------------------------------------------

struct LbaObservation {
    int pose_index = 0;
    int point_index = 0;
    Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
    double weight = 1.0;  // w_i
};

struct LbaGeoFix {
    int pose_index = 0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // VO frame
    double weight = 0.0;  // w_i^G; zero for rejected fixes
};

struct LbaProblem {
    std::vector<PoseSE3> poses;   // window keyframe poses, camera-to-world
    std::vector<char> fixed;      // per-pose constant flag
    std::vector<Eigen::Vector3d> points;
    std::vector<int> point_track_ids;  // provenance for write-back
    std::vector<int> pose_frame_ids;
    std::vector<LbaObservation> observations;
    std::vector<LbaGeoFix> geo_fixes;
    CameraModel camera;
    bool huber = false;          // optional robust loss on reprojection terms
    double huber_delta = 2.0;    // px

    double cost() const;
    void validate() const;
};

struct BuildOptions {
    double w_obs = 1.0;
    bool fix_first_pose = false;
};

// Assembles the window problem: observations of map points seen by at least
// two window keyframes, plus one geo term per keyframe that carries a fix.
// Fix positions must already be expressed in the VO frame (apply_inverse of
// the current FrameTransform). Rejected fixes get weight zero. Throws on an
// empty window.
LbaProblem build_problem(const std::vector<KeyFrame>& window,
                         const std::map<int, MapPoint>& map_points,
                         const std::vector<GeoFix>& fixes_vo_frame,
                         double w_geo, const CameraModel& camera,
                         const BuildOptions& opts = {});

struct LmOptions {
    int max_iters = 50;
    double lambda_init = 1e-3;
    double tol = 1e-9;        // relative cost decrease
    double lambda_max = 1e12;
};

struct LmReport {
    double initial_cost = 0.0;
    double final_cost = 0.0;
    int iterations = 0;
    std::vector<double> lambda_history;
    bool converged = false;
    bool degraded = false;  // normal-equation failure at maximum damping
};

// Damped Gauss-Newton with Schur elimination of the points. Refines
// problem.poses and problem.points in place; every accepted step strictly
// decreases the cost. When the problem has no geo information and no fixed
// pose, the first pose is held constant to remove the gauge freedom.
LmReport solve_lm(LbaProblem& problem, const LmOptions& opts = {});

}  // namespace terranav
