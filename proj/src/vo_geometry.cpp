#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "terranav/vo.hpp"

namespace terranav {

Eigen::Vector2d project(const PoseSE3& pose, const Eigen::Vector3d& point,
                        const CameraModel& camera) {
    const Eigen::Vector3d pc = pose.rotation.transpose() * (point - pose.translation);
    if (!(pc.z() > 0.0))
        throw std::invalid_argument("project: point behind camera (non-positive depth)");
    const double f = camera.focal_px();
    return {camera.cx() + f * pc.x() / pc.z(), camera.cy() + f * pc.y() / pc.z()};
}

namespace {

Eigen::Vector3d ray_direction(const FeatureObservation& obs, const PoseSE3& pose,
                              const CameraModel& camera) {
    const double f = camera.focal_px();
    const Eigen::Vector3d dir_c((obs.u - camera.cx()) / f, (obs.v - camera.cy()) / f, 1.0);
    return pose.rotation * dir_c;
}

}  // namespace

std::optional<MapPoint> triangulate(const FeatureObservation& obs_a,
                                    const FeatureObservation& obs_b,
                                    const PoseSE3& pose_a, const PoseSE3& pose_b,
                                    const CameraModel& camera) {
    const Eigen::Vector3d ca = pose_a.translation;
    const Eigen::Vector3d cb = pose_b.translation;
    if ((cb - ca).norm() < 1e-9)
        throw std::invalid_argument("triangulate: degenerate baseline");

    const Eigen::Vector3d da = ray_direction(obs_a, pose_a, camera).normalized();
    const Eigen::Vector3d db = ray_direction(obs_b, pose_b, camera).normalized();

    // Closest point between the two rays (midpoint method).
    const double daa = da.dot(da), dab = da.dot(db), dbb = db.dot(db);
    const double det = dab * dab - daa * dbb;
    if (std::abs(det) < 1e-12)
        throw std::invalid_argument("triangulate: parallel rays");
    const Eigen::Vector3d d = cb - ca;
    const double s = (dab * db.dot(d) - dbb * da.dot(d)) / det;
    const double t = (daa * db.dot(d) - dab * da.dot(d)) / det;
    const Eigen::Vector3d point = 0.5 * ((ca + s * da) + (cb + t * db));

    // Gate on reprojection residuals in both frames.
    try {
        const Eigen::Vector2d ra = project(pose_a, point, camera);
        const Eigen::Vector2d rb = project(pose_b, point, camera);
        if ((ra - Eigen::Vector2d(obs_a.u, obs_a.v)).norm() >= 2.0 ||
            (rb - Eigen::Vector2d(obs_b.u, obs_b.v)).norm() >= 2.0)
            return std::nullopt;
    } catch (const std::invalid_argument&) {
        return std::nullopt;  // behind either camera
    }

    MapPoint mp;
    mp.track_id = obs_a.track_id;
    mp.position = point;
    mp.observations = 2;
    return mp;
}

namespace {

// Reprojection Gauss-Newton refinement of a world-to-camera pose.
// Returns false when the system is unsolvable.
bool refine_pose_cw(PoseSE3& cw, const std::vector<Eigen::Vector3d>& points,
                    const std::vector<Eigen::Vector2d>& norm_px, int iters) {
    const size_t n = points.size();
    for (int it = 0; it < iters; ++it) {
        Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
        int used = 0;
        for (size_t i = 0; i < n; ++i) {
            const Eigen::Vector3d pc = cw.rotation * points[i] + cw.translation;
            if (pc.z() < 1e-9) continue;
            const double iz = 1.0 / pc.z();
            const Eigen::Vector2d r(pc.x() * iz - norm_px[i].x(),
                                    pc.y() * iz - norm_px[i].y());
            Eigen::Matrix<double, 2, 3> dp;
            dp << iz, 0, -pc.x() * iz * iz,
                  0, iz, -pc.y() * iz * iz;
            Eigen::Matrix<double, 3, 6> dx;
            dx.leftCols<3>() = -skew(pc);
            dx.rightCols<3>() = Eigen::Matrix3d::Identity();
            const Eigen::Matrix<double, 2, 6> J = dp * dx;
            H += J.transpose() * J;
            g += J.transpose() * r;
            ++used;
        }
        if (used < 4) return false;
        H.diagonal().array() += 1e-12;
        const Eigen::Matrix<double, 6, 1> delta = H.ldlt().solve(-g);
        if (!delta.allFinite()) return false;
        cw.rotation = so3_exp(delta.head<3>()) * cw.rotation;
        cw.translation = so3_exp(delta.head<3>()) * cw.translation + delta.tail<3>();
        if (delta.norm() < 1e-13) break;
    }
    return true;
}

}  // namespace

PoseSE3 solve_pnp(const std::vector<Eigen::Vector3d>& points,
                  const std::vector<Eigen::Vector2d>& pixels,
                  const CameraModel& camera, const PoseSE3* prior) {
    const size_t n = points.size();
    if (n != pixels.size())
        throw std::invalid_argument("solve_pnp: points/pixels size mismatch");
    if (n < 4)
        throw std::invalid_argument("solve_pnp: needs at least 4 correspondences");

    const double f = camera.focal_px();
    std::vector<Eigen::Vector2d> norm_px(n);
    for (size_t i = 0; i < n; ++i)
        norm_px[i] = {(pixels[i].x() - camera.cx()) / f, (pixels[i].y() - camera.cy()) / f};

    PoseSE3 cw;
    if (prior) {
        cw = prior->inverse();
    } else if (n >= 6) {
        // DLT on [R|t] with normalized pixels, then projection onto SO(3).
        Eigen::MatrixXd A(2 * n, 12);
        for (size_t i = 0; i < n; ++i) {
            const Eigen::Vector3d& X = points[i];
            const double x = norm_px[i].x(), y = norm_px[i].y();
            A.row(2 * i) << X.x(), X.y(), X.z(), 1, 0, 0, 0, 0,
                -x * X.x(), -x * X.y(), -x * X.z(), -x;
            A.row(2 * i + 1) << 0, 0, 0, 0, X.x(), X.y(), X.z(), 1,
                -y * X.x(), -y * X.y(), -y * X.z(), -y;
        }
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        if (sv(10) < 1e-10 * sv(0))
            throw std::invalid_argument("solve_pnp: degenerate correspondences");
        Eigen::Matrix<double, 12, 1> p = svd.matrixV().col(11);
        Eigen::Matrix3d M;
        M << p(0), p(1), p(2), p(4), p(5), p(6), p(8), p(9), p(10);
        Eigen::Vector3d t(p(3), p(7), p(11));
        if (M.determinant() < 0) {
            M = -M;
            t = -t;
        }
        const Eigen::JacobiSVD<Eigen::Matrix3d> msvd(
            M, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const double scale = msvd.singularValues().mean();
        if (scale < 1e-12)
            throw std::invalid_argument("solve_pnp: degenerate correspondences");
        cw.rotation = msvd.matrixU() * msvd.matrixV().transpose();
        cw.translation = t / scale;
    } else {
        // Too few points for DLT and no prior: a crude init looking down the
        // centroid direction, refined below; degenerate cases will fail there.
        Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
        for (const auto& X : points) centroid += X;
        centroid /= double(n);
        cw.rotation = Eigen::Matrix3d::Identity();
        cw.translation = Eigen::Vector3d(0, 0, 1.0) - centroid;
    }

    if (!refine_pose_cw(cw, points, norm_px, 25))
        throw std::invalid_argument("solve_pnp: refinement failed (degenerate configuration)");
    return cw.inverse();
}

PoseSE3 relative_pose_from_matches(const std::vector<Eigen::Vector2d>& px_a,
                                   const std::vector<Eigen::Vector2d>& px_b,
                                   const CameraModel& camera) {
    const size_t n = px_a.size();
    if (n != px_b.size() || n < 8)
        throw std::invalid_argument("relative_pose_from_matches: needs >= 8 matches");
    const double f = camera.focal_px();
    auto norm = [&](const Eigen::Vector2d& p) {
        return Eigen::Vector3d((p.x() - camera.cx()) / f, (p.y() - camera.cy()) / f, 1.0);
    };

    Eigen::MatrixXd A(n, 9);
    for (size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d xa = norm(px_a[i]);
        const Eigen::Vector3d xb = norm(px_b[i]);
        A.row(i) << xb.x() * xa.x(), xb.x() * xa.y(), xb.x(), xb.y() * xa.x(),
            xb.y() * xa.y(), xb.y(), xa.x(), xa.y(), 1.0;
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const Eigen::Matrix<double, 9, 1> e = svd.matrixV().col(8);
    Eigen::Matrix3d E;
    E << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);

    Eigen::JacobiSVD<Eigen::Matrix3d> esvd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d U = esvd.matrixU();
    Eigen::Matrix3d V = esvd.matrixV();
    if (U.determinant() < 0) U.col(2) *= -1;
    if (V.determinant() < 0) V.col(2) *= -1;
    Eigen::Matrix3d W;
    W << 0, -1, 0, 1, 0, 0, 0, 0, 1;

    const Eigen::Matrix3d R1 = U * W * V.transpose();
    const Eigen::Matrix3d R2 = U * W.transpose() * V.transpose();
    const Eigen::Vector3d tb = U.col(2);

    // Cheirality: pick the candidate with the most points in front of both
    // cameras (X_b = R X_a + t).
    auto count_front = [&](const Eigen::Matrix3d& R, const Eigen::Vector3d& t) {
        int cnt = 0;
        for (size_t i = 0; i < n; ++i) {
            const Eigen::Vector3d xa = norm(px_a[i]);
            const Eigen::Vector3d xb = norm(px_b[i]);
            // Triangulate depth along ray a: solve [xa, -R^T xb] [za; zb] = -R^T t.
            Eigen::Matrix<double, 3, 2> M;
            M.col(0) = xa;
            M.col(1) = -(R.transpose() * xb);
            const Eigen::Vector2d z =
                (M.transpose() * M).ldlt().solve(M.transpose() * (-R.transpose() * t));
            if (z(0) > 0 && z(1) > 0) ++cnt;
        }
        return cnt;
    };

    int best_count = -1;
    Eigen::Matrix3d best_R = R1;
    Eigen::Vector3d best_t = tb;
    for (const auto& R : {R1, R2})
        for (const auto& t : {tb, Eigen::Vector3d(-tb)}) {
            const int c = count_front(R, t);
            if (c > best_count) {
                best_count = c;
                best_R = R;
                best_t = t;
            }
        }
    if (best_count < int(n) / 2)
        throw std::invalid_argument("relative_pose_from_matches: cheirality check failed");

    // (best_R, best_t) maps frame-a coordinates to frame b; return the pose
    // of camera b expressed in frame a, unit baseline.
    PoseSE3 pose;
    pose.rotation = best_R.transpose();
    pose.translation = -(best_R.transpose() * best_t);
    pose.translation.normalize();
    return pose;
}

}  // namespace terranav
