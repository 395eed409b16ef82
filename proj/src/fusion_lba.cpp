#include "terranav/fusion_lba.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace terranav {

void FrameTransform::validate() const {
    const Eigen::Matrix3d rtr = rotation.transpose() * rotation;
    if ((rtr - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9)
        throw std::invalid_argument("FrameTransform: rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-9)
        throw std::invalid_argument("FrameTransform: rotation determinant is not +1");
    if (!(scale > 0.0))
        throw std::invalid_argument("FrameTransform: scale must be > 0");
}

FrameTransform align_trajectories(const std::vector<Eigen::Vector3d>& vo_positions,
                                  const std::vector<Eigen::Vector3d>& fix_positions,
                                  bool with_scale) {
    const size_t n = vo_positions.size();
    if (n != fix_positions.size())
        throw std::invalid_argument("align_trajectories: size mismatch");
    if (n < 3)
        throw std::invalid_argument("align_trajectories: needs at least 3 pairs");

    Eigen::Vector3d mu_x = Eigen::Vector3d::Zero(), mu_y = Eigen::Vector3d::Zero();
    for (size_t i = 0; i < n; ++i) {
        mu_x += vo_positions[i];
        mu_y += fix_positions[i];
    }
    mu_x /= double(n);
    mu_y /= double(n);

    Eigen::Matrix3d sigma_xy = Eigen::Matrix3d::Zero();
    double var_x = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d dx = vo_positions[i] - mu_x;
        const Eigen::Vector3d dy = fix_positions[i] - mu_y;
        sigma_xy += dy * dx.transpose();
        var_x += dx.squaredNorm();
    }
    sigma_xy /= double(n);
    var_x /= double(n);
    if (var_x < 1e-18)
        throw std::invalid_argument("align_trajectories: degenerate (coincident) positions");

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma_xy, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d d = svd.singularValues();
    // Two vanishing singular values mean the source points are collinear and
    // the rotation about that line is unobservable.
    if (d(1) < 1e-9 * std::max(d(0), 1e-300))
        throw std::invalid_argument("align_trajectories: collinear configuration");

    Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) s(2, 2) = -1.0;

    FrameTransform h;
    h.rotation = svd.matrixU() * s * svd.matrixV().transpose();
    h.scale = with_scale ? (d.asDiagonal().toDenseMatrix() * s).trace() / var_x : 1.0;
    if (!(h.scale > 0.0))
        throw std::invalid_argument("align_trajectories: non-positive scale");
    h.translation = mu_y - h.scale * (h.rotation * mu_x);
    return h;
}

FrameTransform align_trajectories(const std::vector<std::pair<int, Eigen::Vector3d>>& vo_kf,
                                  const std::vector<GeoFix>& fixes, bool with_scale) {
    std::vector<Eigen::Vector3d> vo, fix;
    for (const auto& f : fixes) {
        if (!f.accepted) continue;
        for (const auto& [id, pos] : vo_kf)
            if (id == f.keyframe_id) {
                vo.push_back(pos);
                fix.push_back(f.position);
                break;
            }
    }
    return align_trajectories(vo, fix, with_scale);
}

// --- Residuals ---------------------------------------------------------------

Eigen::Vector2d reprojection_residual(const PoseSE3& pose, const Eigen::Vector3d& point,
                                      const Eigen::Vector2d& obs, const CameraModel& camera,
                                      bool* valid) {
    const Eigen::Vector3d pc = pose.rotation.transpose() * (point - pose.translation);
    if (!(pc.z() > 0.0)) {
        if (valid) {
            *valid = false;
            return Eigen::Vector2d::Zero();
        }
        throw std::invalid_argument("reprojection_residual: non-positive depth");
    }
    if (valid) *valid = true;
    const double f = camera.focal_px();
    return Eigen::Vector2d(camera.cx() + f * pc.x() / pc.z() - obs.x(),
                           camera.cy() + f * pc.y() / pc.z() - obs.y());
}

ReprojResidual reprojection_residual_jacobians(const PoseSE3& pose,
                                               const Eigen::Vector3d& point,
                                               const Eigen::Vector2d& obs,
                                               const CameraModel& camera) {
    ReprojResidual out;
    const Eigen::Matrix3d r_cw = pose.rotation.transpose();
    const Eigen::Vector3d pc = r_cw * (point - pose.translation);
    if (!(pc.z() > 0.0)) return out;  // valid stays false
    out.valid = true;
    const double f = camera.focal_px();
    const double iz = 1.0 / pc.z();
    out.e.x() = camera.cx() + f * pc.x() * iz - obs.x();
    out.e.y() = camera.cy() + f * pc.y() * iz - obs.y();

    Eigen::Matrix<double, 2, 3> dp;
    dp << f * iz, 0, -f * pc.x() * iz * iz,
          0, f * iz, -f * pc.y() * iz * iz;
    Eigen::Matrix<double, 3, 6> dx;  // d pc / d xi, xi = (omega, nu) on T_cw
    dx.leftCols<3>() = -skew(pc);
    dx.rightCols<3>() = Eigen::Matrix3d::Identity();
    out.J_pose = dp * dx;
    out.J_point = dp * r_cw;
    return out;
}

Eigen::Vector3d geo_residual(const Eigen::Vector3d& pose_position,
                             const Eigen::Vector3d& fix_position) {
    return fix_position - pose_position;
}

Eigen::Matrix<double, 3, 6> geo_residual_jacobian(const PoseSE3& pose) {
    Eigen::Matrix<double, 3, 6> j = Eigen::Matrix<double, 3, 6>::Zero();
    // The camera center is invariant to the rotational part of the local
    // perturbation (it rotates about the center), so only nu contributes:
    // delta C = -R_wc nu, hence d e / d nu = +R_wc.
    j.rightCols<3>() = pose.rotation;
    return j;
}

// --- Problem -----------------------------------------------------------------

void LbaProblem::validate() const {
    if (poses.empty())
        throw std::invalid_argument("LbaProblem: empty window");
    if (fixed.size() != poses.size())
        throw std::invalid_argument("LbaProblem: fixed-flag size mismatch");
    std::vector<int> seen_by(points.size(), 0);
    for (const auto& o : observations) {
        if (o.pose_index < 0 || o.pose_index >= int(poses.size()) || o.point_index < 0 ||
            o.point_index >= int(points.size()))
            throw std::invalid_argument("LbaProblem: observation index out of range");
        if (!(o.weight >= 0.0))
            throw std::invalid_argument("LbaProblem: negative observation weight");
        ++seen_by[size_t(o.point_index)];
    }
    for (int c : seen_by)
        if (c < 2)
            throw std::invalid_argument("LbaProblem: map point observed by fewer than 2 keyframes");
    for (const auto& g : geo_fixes) {
        if (g.pose_index < 0 || g.pose_index >= int(poses.size()))
            throw std::invalid_argument("LbaProblem: geo fix index out of range");
        if (!(g.weight >= 0.0))
            throw std::invalid_argument("LbaProblem: negative geo weight");
    }
}

double LbaProblem::cost() const {
    double c = 0.0;
    for (const auto& o : observations) {
        if (o.weight <= 0.0) continue;
        bool valid = false;
        const Eigen::Vector2d e = reprojection_residual(
            poses[size_t(o.pose_index)], points[size_t(o.point_index)], o.pixel, camera,
            &valid);
        if (!valid) continue;
        const double n2 = e.squaredNorm();
        if (huber) {
            const double n = std::sqrt(n2);
            c += o.weight * (n <= huber_delta ? 0.5 * n2
                                              : huber_delta * (n - 0.5 * huber_delta));
        } else {
            c += 0.5 * o.weight * n2;
        }
    }
    for (const auto& g : geo_fixes) {
        if (g.weight <= 0.0) continue;
        c += 0.5 * g.weight *
             geo_residual(poses[size_t(g.pose_index)].translation, g.position).squaredNorm();
    }
    return c;
}

LbaProblem build_problem(const std::vector<KeyFrame>& window,
                         const std::map<int, MapPoint>& map_points,
                         const std::vector<GeoFix>& fixes_vo_frame, double w_geo,
                         const CameraModel& camera, const BuildOptions& opts) {
    if (window.empty())
        throw std::invalid_argument("build_problem: empty window");
    if (!(w_geo >= 0.0))
        throw std::invalid_argument("build_problem: negative geo confidence");

    LbaProblem p;
    p.camera = camera;
    p.poses.reserve(window.size());
    for (const auto& kf : window) {
        p.poses.push_back(kf.pose);
        p.pose_frame_ids.push_back(kf.frame_id);
        p.fixed.push_back(0);
    }
    if (opts.fix_first_pose) p.fixed[0] = 1;

    // Points seen by at least two window keyframes.
    std::map<int, int> window_count;
    for (const auto& kf : window)
        for (const auto& obs : kf.observations)
            if (map_points.count(obs.track_id)) ++window_count[obs.track_id];
    std::map<int, int> point_index;
    for (const auto& [track_id, count] : window_count) {
        if (count < 2) continue;
        point_index[track_id] = int(p.points.size());
        p.points.push_back(map_points.at(track_id).position);
        p.point_track_ids.push_back(track_id);
    }

    for (size_t i = 0; i < window.size(); ++i)
        for (const auto& obs : window[i].observations) {
            auto it = point_index.find(obs.track_id);
            if (it == point_index.end()) continue;
            p.observations.push_back(
                {int(i), it->second, Eigen::Vector2d(obs.u, obs.v), opts.w_obs});
        }

    for (const auto& fix : fixes_vo_frame)
        for (size_t i = 0; i < window.size(); ++i)
            if (window[i].frame_id == fix.keyframe_id) {
                p.geo_fixes.push_back({int(i), fix.position, fix.accepted ? w_geo : 0.0});
                break;
            }

    p.validate();
    return p;
}

// --- Levenberg-Marquardt with Schur elimination of the points ----------------

namespace {

struct PointBlock {
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    // (free-pose slot, W = w * J_pose^T J_point) for each observing free pose
    std::vector<std::pair<int, Eigen::Matrix<double, 6, 3>>> w_blocks;
};

}  // namespace

LmReport solve_lm(LbaProblem& problem, const LmOptions& opts) {
    problem.validate();
    problem.camera.validate();
    for (const auto& pose : problem.poses) pose.validate();

    const int n_poses = int(problem.poses.size());
    const int n_points = int(problem.points.size());

    // Gauge: without any geo information or externally fixed pose, hold the
    // first window pose constant.
    std::vector<char> fixed = problem.fixed;
    double total_geo_weight = 0.0;
    for (const auto& g : problem.geo_fixes) total_geo_weight += g.weight;
    const bool any_fixed = std::any_of(fixed.begin(), fixed.end(), [](char c) { return c != 0; });
    if (total_geo_weight <= 0.0 && !any_fixed && n_poses > 0) fixed[0] = 1;

    std::vector<int> slot(n_poses, -1);
    int n_free = 0;
    for (int i = 0; i < n_poses; ++i)
        if (!fixed[size_t(i)]) slot[size_t(i)] = n_free++;

    LmReport report;
    report.initial_cost = problem.cost();
    double cost = report.initial_cost;
    double lambda = opts.lambda_init;

    if (n_free == 0 && n_points == 0) {
        report.final_cost = cost;
        report.converged = true;
        return report;
    }

    for (int iter = 0; iter < opts.max_iters; ++iter) {
        // Assemble the normal equations at the current state.
        std::vector<Eigen::Matrix<double, 6, 6>> hpp(
            size_t(std::max(n_free, 1)), Eigen::Matrix<double, 6, 6>::Zero());
        std::vector<Eigen::Matrix<double, 6, 1>> gp(
            size_t(std::max(n_free, 1)), Eigen::Matrix<double, 6, 1>::Zero());
        std::vector<PointBlock> pts(static_cast<size_t>(n_points));

        for (const auto& o : problem.observations) {
            if (o.weight <= 0.0) continue;
            const ReprojResidual rr = reprojection_residual_jacobians(
                problem.poses[size_t(o.pose_index)], problem.points[size_t(o.point_index)],
                o.pixel, problem.camera);
            if (!rr.valid) continue;
            double w = o.weight;
            if (problem.huber) {
                const double n = rr.e.norm();
                if (n > problem.huber_delta) w *= problem.huber_delta / n;
            }
            const int s = slot[size_t(o.pose_index)];
            PointBlock& pb = pts[size_t(o.point_index)];
            pb.h += w * rr.J_point.transpose() * rr.J_point;
            pb.g += w * rr.J_point.transpose() * rr.e;
            if (s >= 0) {
                hpp[size_t(s)] += w * rr.J_pose.transpose() * rr.J_pose;
                gp[size_t(s)] += w * rr.J_pose.transpose() * rr.e;
                pb.w_blocks.push_back({s, w * rr.J_pose.transpose() * rr.J_point});
            }
        }
        for (const auto& g : problem.geo_fixes) {
            if (g.weight <= 0.0) continue;
            const int s = slot[size_t(g.pose_index)];
            if (s < 0) continue;
            const PoseSE3& pose = problem.poses[size_t(g.pose_index)];
            const Eigen::Vector3d e = geo_residual(pose.translation, g.position);
            const Eigen::Matrix<double, 3, 6> j = geo_residual_jacobian(pose);
            hpp[size_t(s)] += g.weight * j.transpose() * j;
            gp[size_t(s)] += g.weight * j.transpose() * e;
        }

        // Already at a stationary point (e.g. a noiseless problem initialized
        // at the optimum): nothing to do.
        double grad_inf = 0.0;
        for (int s = 0; s < n_free; ++s)
            grad_inf = std::max(grad_inf, gp[size_t(s)].cwiseAbs().maxCoeff());
        for (const auto& pb : pts)
            grad_inf = std::max(grad_inf, pb.g.cwiseAbs().maxCoeff());
        if (grad_inf <= 1e-14 * std::max(1.0, cost)) {
            report.converged = true;
            break;
        }

        // Damping loop: try steps until one decreases the cost.
        bool stepped = false;
        bool solver_failure = false;
        while (true) {
            Eigen::MatrixXd schur = Eigen::MatrixXd::Zero(6 * n_free, 6 * n_free);
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(6 * n_free);
            for (int s = 0; s < n_free; ++s) {
                Eigen::Matrix<double, 6, 6> h = hpp[size_t(s)];
                for (int k = 0; k < 6; ++k)
                    h(k, k) += lambda * std::max(h(k, k), 1e-12);
                schur.block<6, 6>(6 * s, 6 * s) = h;
                rhs.segment<6>(6 * s) = -gp[size_t(s)];
            }
            std::vector<Eigen::Matrix3d> hll_inv(static_cast<size_t>(n_points));
            bool bad = false;
            for (int j = 0; j < n_points; ++j) {
                Eigen::Matrix3d h = pts[size_t(j)].h;
                for (int k = 0; k < 3; ++k)
                    h(k, k) += lambda * std::max(h(k, k), 1e-12);
                const Eigen::Matrix3d inv = h.inverse();
                if (!inv.allFinite()) {
                    bad = true;
                    break;
                }
                hll_inv[size_t(j)] = inv;
                const PointBlock& pb = pts[size_t(j)];
                for (const auto& [sa, wa] : pb.w_blocks) {
                    rhs.segment<6>(6 * sa) += wa * (inv * pb.g);
                    for (const auto& [sb, wb] : pb.w_blocks)
                        schur.block<6, 6>(6 * sa, 6 * sb) -= wa * inv * wb.transpose();
                }
            }

            Eigen::VectorXd delta_p = Eigen::VectorXd::Zero(6 * n_free);
            if (!bad && n_free > 0) {
                const Eigen::LDLT<Eigen::MatrixXd> ldlt(schur);
                if (ldlt.info() == Eigen::Success) {
                    delta_p = ldlt.solve(rhs);
                    if (!delta_p.allFinite()) bad = true;
                } else {
                    bad = true;
                }
            }

            if (!bad) {
                // Back-substitute the points and evaluate the candidate.
                std::vector<PoseSE3> new_poses = problem.poses;
                std::vector<Eigen::Vector3d> new_points = problem.points;
                for (int i = 0; i < n_poses; ++i) {
                    const int s = slot[size_t(i)];
                    if (s < 0) continue;
                    new_poses[size_t(i)] =
                        retract_pose(problem.poses[size_t(i)], delta_p.segment<6>(6 * s));
                }
                for (int j = 0; j < n_points; ++j) {
                    const PointBlock& pb = pts[size_t(j)];
                    Eigen::Vector3d acc = pb.g;
                    for (const auto& [s, w] : pb.w_blocks)
                        acc += w.transpose() * delta_p.segment<6>(6 * s);
                    new_points[size_t(j)] =
                        problem.points[size_t(j)] - hll_inv[size_t(j)] * acc;
                }

                std::swap(problem.poses, new_poses);
                std::swap(problem.points, new_points);
                const double new_cost = problem.cost();
                if (new_cost < cost) {
                    report.lambda_history.push_back(lambda);
                    const double drop = cost - new_cost;
                    cost = new_cost;
                    lambda = std::max(lambda * 0.1, 1e-12);
                    stepped = true;
                    ++report.iterations;
                    if (drop <= opts.tol * std::max(cost, 1e-300)) report.converged = true;
                    break;
                }
                std::swap(problem.poses, new_poses);  // reject, restore
                std::swap(problem.points, new_points);
            } else {
                solver_failure = true;
            }

            lambda *= 10.0;
            if (lambda > opts.lambda_max) break;
        }

        if (!stepped) {
            if (solver_failure)
                report.degraded = true;  // best iterate kept
            else
                report.converged = true;  // no descent direction at max damping
            break;
        }
        if (report.converged) break;
    }

    report.final_cost = cost;
    return report;
}

}  // namespace terranav
