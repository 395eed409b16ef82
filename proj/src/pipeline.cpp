#include "terranav/pipeline.hpp"

#include <Eigen/Dense>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace terranav {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

int configured_threads() {
    const char* env = std::getenv("TERRANAV_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    if (n <= 0) return 1;
    return std::min<int>(n, int(std::thread::hardware_concurrency() > 0
                                    ? std::thread::hardware_concurrency()
                                    : 1));
}

void parallel_for(int n, const std::function<void(int)>& fn, int threads) {
    if (threads <= 0) threads = configured_threads();
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(size_t(threads));
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& th : pool) th.join();
}

std::string frame_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06d.demr", index);
    return buf;
}

DirectoryFrameProvider::DirectoryFrameProvider(std::string dir, std::vector<double> stamps)
    : dir_(std::move(dir)), stamps_(std::move(stamps)) {}

RasterImage DirectoryFrameProvider::frame(int index) {
    return load_image(dir_ + "/" + frame_filename(index));
}

namespace {

// Alignment wrapper: the closed-form fit needs non-collinear pairs; straight
// flight lines fall back to a translation-only alignment that anchors the
// rotation at the known nadir mounting (VO frame = first camera frame).
bool estimate_alignment(const std::vector<std::pair<int, Eigen::Vector3d>>& vo_kf,
                        const std::vector<GeoFix>& fixes, bool with_scale,
                        FrameTransform& out) {
    std::vector<Eigen::Vector3d> vo, fx;
    for (const auto& f : fixes) {
        if (!f.accepted) continue;
        for (const auto& [id, pos] : vo_kf)
            if (id == f.keyframe_id) {
                vo.push_back(pos);
                fx.push_back(f.position);
                break;
            }
    }
    if (vo.size() < 3) return false;

    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    for (const auto& p : vo) mu += p;
    mu /= double(vo.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : vo) cov += (p - mu) * (p - mu).transpose();
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const double spread_ratio =
        eig.eigenvalues()(1) / std::max(eig.eigenvalues()(2), 1e-300);

    if (spread_ratio > 5e-3) {
        try {
            out = align_trajectories(vo, fx, with_scale);
            return true;
        } catch (const std::invalid_argument&) {
        }
    }
    // Translation-only: rotation fixed at the nadir camera-to-world attitude.
    FrameTransform h;
    h.rotation = nadir_pose(Eigen::Vector3d::Zero()).rotation;
    h.scale = 1.0;
    Eigen::Vector3d mu_fix = Eigen::Vector3d::Zero();
    for (const auto& p : fx) mu_fix += p;
    mu_fix /= double(fx.size());
    h.translation = mu_fix - h.rotation * mu;
    out = h;
    return true;
}

}  // namespace

SlamResult run_slam(const DemGrid& dem, const PlannedPath& planned, FrameProvider& frames,
                    const CameraModel& camera, const IlluminationConfig& presumed_illum,
                    const PipelineOptions& opts,
                    const std::vector<StampedPose>* gt_bootstrap) {
    dem.validate();
    planned.validate();
    camera.validate();
    if (frames.count() < 2)
        throw std::invalid_argument("run_slam: needs at least 2 frames");

    const GradientField grads = gradient_field(dem);

    VoOptions vo_opts;
    vo_opts.drift_per_frame = opts.inject_drift;
    vo_opts.drift_seed = opts.drift_seed;
    VisualOdometry vo(camera, vo_opts);
    if (gt_bootstrap && gt_bootstrap->size() >= 2) {
        const std::vector<StampedPose> gt = *gt_bootstrap;
        vo.set_bootstrap_pose_hint([gt](int frame_id) {
            const size_t k = std::min(size_t(frame_id), gt.size() - 1);
            return gt[0].pose.inverse() * gt[k].pose;
        });
    }

    SlamResult result;
    SlamReport& rep = result.report;
    FrameTransform alignment;
    bool have_alignment = false;
    double lba_iters_total = 0.0;
    int lba_runs = 0;

    for (int k = 0; k < frames.count(); ++k) {
        const RasterImage img = frames.frame(k);
        const double t = frames.timestamp(k);

        const auto t0 = Clock::now();
        const AdvanceResult adv = vo.advance(img, t);
        rep.track_ms += ms_since(t0);
        if (adv.lost) rep.vo_lost = true;
        if (!adv.new_keyframe) continue;

        const KeyFrame& kf = *adv.new_keyframe;

        // Geo-reference the new keyframe against the planned path.
        const auto t1 = Clock::now();
        const PlannedPathEntry& entry = planned.nearest(kf.timestamp);
        const double height = entry.z - bilinear_sample(dem, entry.x, entry.y);
        GeoFix fix;
        bool have_fix = false;
        try {
            fix = georeference(img, entry, dem, grads, camera, presumed_illum, height,
                               opts.georef, kf.frame_id);
            fix.t = kf.timestamp;
            result.fixes.push_back(fix);
            have_fix = true;
            ++rep.fixes_total;
            if (fix.accepted) ++rep.fixes_accepted;
        } catch (const std::invalid_argument&) {
            // Footprint outside the map: no fix for this keyframe.
        }
        rep.georef_ms += ms_since(t1);
        (void)have_fix;

        // Refresh the VO-to-world alignment from accepted fixes.
        {
            std::vector<std::pair<int, Eigen::Vector3d>> vo_kf;
            for (const auto& key : vo.keyframes())
                vo_kf.push_back({key.frame_id, key.pose.translation});
            const size_t pairs_window = size_t(std::max(2 * opts.window_size, 10));
            std::vector<GeoFix> recent;
            for (size_t i = result.fixes.size() > pairs_window
                                ? result.fixes.size() - pairs_window
                                : 0;
                 i < result.fixes.size(); ++i)
                recent.push_back(result.fixes[i]);
            FrameTransform h;
            if (estimate_alignment(vo_kf, recent, opts.similarity_alignment, h)) {
                alignment = h;
                have_alignment = true;
            }
        }

        // Sliding-window bundle adjustment.
        if (opts.lba_enabled) {
            const auto t2 = Clock::now();
            auto& kfs = vo.keyframes();
            const size_t w0 =
                kfs.size() > size_t(opts.window_size) ? kfs.size() - opts.window_size : 0;
            std::vector<KeyFrame> window(kfs.begin() + long(w0), kfs.end());

            std::vector<GeoFix> fixes_vo;
            if (have_alignment) {
                for (const auto& f : result.fixes) {
                    for (const auto& wkf : window)
                        if (wkf.frame_id == f.keyframe_id) {
                            GeoFix g = f;
                            g.position = alignment.apply_inverse(f.position);
                            fixes_vo.push_back(g);
                            break;
                        }
                }
            }

            try {
                BuildOptions bopts;
                bopts.w_obs = opts.w_obs;
                bopts.fix_first_pose = true;  // continuity anchor for the sliding window
                LbaProblem problem = build_problem(window, vo.map_points(), fixes_vo,
                                                   opts.w_geo, camera, bopts);
                const PoseSE3 old_last = window.back().pose;
                const LmReport lm = solve_lm(problem);
                lba_iters_total += lm.iterations;
                ++lba_runs;
                for (size_t i = 0; i < problem.poses.size(); ++i)
                    vo.update_keyframe_pose(int(w0 + i), problem.poses[i]);
                for (size_t j = 0; j < problem.points.size(); ++j)
                    vo.update_map_point(problem.point_track_ids[j], problem.points[j]);
                vo.apply_tracking_correction(old_last, problem.poses.back());
            } catch (const std::invalid_argument&) {
                // Window without enough shared structure; skip this round.
            }
            rep.lba_ms += ms_since(t2);
        }
    }

    // Assemble output trajectories. Fused positions hang off the refined pose
    // of their reference keyframe, then map through the world alignment.
    const auto& kfs = vo.keyframes();
    for (const auto& a : vo.frame_anchors()) {
        StampedPose raw;
        raw.t = a.t;
        raw.pose.rotation = a.vo_rotation;
        raw.pose.translation = a.vo_position;
        result.vo_only.push_back(raw);

        Eigen::Vector3d pos_vo = a.vo_position;
        Eigen::Matrix3d rot_vo = a.vo_rotation;
        if (a.keyframe_index >= 0 && a.keyframe_index < int(kfs.size())) {
            const PoseSE3& kf = kfs[size_t(a.keyframe_index)].pose;
            pos_vo = kf.rotation * a.offset_in_kf + kf.translation;
            rot_vo = kf.rotation * a.rot_in_kf;
        }
        StampedPose fused;
        fused.t = a.t;
        if (have_alignment) {
            fused.pose.translation = alignment.apply(pos_vo);
            fused.pose.rotation = alignment.rotation * rot_vo;
        } else {
            fused.pose.translation = pos_vo;
            fused.pose.rotation = rot_vo;
        }
        result.fused.push_back(fused);
    }

    result.alignment = alignment;
    rep.aligned = have_alignment;
    rep.frames = frames.count();
    rep.keyframes = int(kfs.size());
    rep.mean_lba_iters = lba_runs > 0 ? lba_iters_total / lba_runs : 0.0;
    const double total_ms = rep.track_ms + rep.georef_ms + rep.lba_ms;
    rep.wall_time_per_frame_ms = total_ms / std::max(1, rep.frames);
    rep.processing_fps = total_ms > 0 ? 1000.0 * rep.frames / total_ms : 0.0;
    return result;
}

}  // namespace terranav
