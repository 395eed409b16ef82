#include "terranav/se3.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace terranav {

void PoseSE3::validate() const {
    const Eigen::Matrix3d should_be_identity = rotation.transpose() * rotation;
    if ((should_be_identity - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9)
        throw std::invalid_argument("PoseSE3: rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-9)
        throw std::invalid_argument("PoseSE3: rotation determinant is not +1");
    if (!translation.allFinite())
        throw std::invalid_argument("PoseSE3: non-finite translation");
}

PoseSE3 nadir_pose(const Eigen::Vector3d& position) {
    PoseSE3 p;
    p.rotation << 1, 0, 0,
                  0, -1, 0,
                  0, 0, -1;
    p.translation = position;
    return p;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0, -v.z(), v.y(),
         v.z(), 0, -v.x(),
         -v.y(), v.x(), 0;
    return m;
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w) {
    const double theta = w.norm();
    if (theta < 1e-12) return Eigen::Matrix3d::Identity() + skew(w);
    const Eigen::Vector3d axis = w / theta;
    return Eigen::AngleAxisd(theta, axis).toRotationMatrix();
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& R) {
    const Eigen::AngleAxisd aa(R);
    return aa.angle() * aa.axis();
}

PoseSE3 retract_pose(const PoseSE3& pose_wc, const Eigen::Matrix<double, 6, 1>& xi) {
    const Eigen::Matrix3d dR = so3_exp(xi.head<3>());
    const PoseSE3 cw = pose_wc.inverse();
    PoseSE3 cw2;
    cw2.rotation = dR * cw.rotation;
    cw2.translation = dR * cw.translation + xi.tail<3>();
    return cw2.inverse();
}

Trajectory trajectory_from_poses(const std::vector<StampedPose>& poses,
                                 const std::string& frame) {
    Trajectory t;
    t.frame = frame;
    for (const auto& sp : poses) t.push(sp.t, sp.pose.translation);
    return t;
}

void save_tum(const std::string& path, const std::vector<StampedPose>& poses) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << std::setprecision(12);
    for (const auto& sp : poses) {
        const Eigen::Quaterniond q(sp.pose.rotation);
        f << sp.t << " " << sp.pose.translation.x() << " " << sp.pose.translation.y()
          << " " << sp.pose.translation.z() << " " << q.x() << " " << q.y() << " "
          << q.z() << " " << q.w() << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<StampedPose> load_tum(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("missing file: " + path);
    std::vector<StampedPose> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        StampedPose sp;
        double qx, qy, qz, qw;
        if (!(ss >> sp.t >> sp.pose.translation.x() >> sp.pose.translation.y() >>
              sp.pose.translation.z() >> qx >> qy >> qz >> qw))
            throw std::runtime_error("malformed TUM line in " + path + ": " + line);
        sp.pose.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
        out.push_back(sp);
    }
    return out;
}

}  // namespace terranav
