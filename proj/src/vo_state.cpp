#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "terranav/vo.hpp"

namespace terranav {

namespace {

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d4a9f5cd5b7f9bULL;
    return z ^ (z >> 31);
}

double unit_double(uint64_t bits) { return double(bits >> 11) * 0x1.0p-53; }

Eigen::Vector3d pixel_ray(const PoseSE3& pose, double u, double v, const CameraModel& cam) {
    const double f = cam.focal_px();
    return (pose.rotation * Eigen::Vector3d((u - cam.cx()) / f, (v - cam.cy()) / f, 1.0))
        .normalized();
}

double ray_parallax_deg(const PoseSE3& pose_a, double ua, double va, const PoseSE3& pose_b,
                        double ub, double vb, const CameraModel& cam) {
    const Eigen::Vector3d da = pixel_ray(pose_a, ua, va, cam);
    const Eigen::Vector3d db = pixel_ray(pose_b, ub, vb, cam);
    const double c = std::clamp(da.dot(db), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace

VisualOdometry::VisualOdometry(const CameraModel& camera, const VoOptions& opts)
    : camera_(camera), opts_(opts) {
    camera_.validate();
    drift_rng_ = opts_.drift_seed;
    const double ang = 2.0 * std::numbers::pi * unit_double(splitmix64(drift_rng_));
    drift_dir_ = Eigen::Vector3d(std::cos(ang), std::sin(ang), 0.0);
}

void VisualOdometry::set_bootstrap_pose_hint(std::function<PoseSE3(int)> hint) {
    bootstrap_hint_ = std::move(hint);
}

void VisualOdometry::detect_new_features(const RasterImage& frame) {
    if (int(tracks_.size()) >= opts_.max_features) return;
    const auto corners = detect_corners(frame, opts_.max_features * 2);
    for (const auto& c : corners) {
        bool near_existing = false;
        for (const auto& t : tracks_)
            if ((t.px - c).cwiseAbs().maxCoeff() <= 5.0) {
                near_existing = true;
                break;
            }
        if (near_existing) continue;
        TrackState ts;
        ts.track_id = next_track_id_++;
        ts.px = c;
        ts.first_frame = frame_id_;
        ts.first_pose = cur_pose_;
        ts.first_px = c;
        ts.has_point = false;
        tracks_.push_back(ts);
        if (int(tracks_.size()) >= opts_.max_features) break;
    }
}

void VisualOdometry::apply_drift_step() {
    if (opts_.drift_per_frame <= 0.0) return;
    // Slowly wandering horizontal direction, deterministic in the seed. The
    // whole VO world (pose, map, pending track anchors) moves together so
    // the reprojection geometry stays self-consistent, like organic drift.
    const double turn = (unit_double(splitmix64(drift_rng_)) - 0.5) * 0.2;
    const double c = std::cos(turn), s = std::sin(turn);
    drift_dir_ = Eigen::Vector3d(c * drift_dir_.x() - s * drift_dir_.y(),
                                 s * drift_dir_.x() + c * drift_dir_.y(), 0.0);
    const Eigen::Vector3d step = opts_.drift_per_frame * drift_dir_;
    cur_pose_.translation += step;
    for (auto& [id, mp] : map_) mp.position += step;
    for (auto& t : tracks_) t.first_pose.translation += step;
}

void VisualOdometry::record_frame(double t) {
    if (!trajectory_.stamps.empty() && t <= trajectory_.stamps.back())
        throw std::invalid_argument("advance: timestamps must be strictly increasing");
    const Eigen::Vector3d pos = cur_pose_.translation;
    Eigen::Vector3d inc = Eigen::Vector3d::Zero();
    if (!trajectory_.positions.empty()) inc = pos - trajectory_.positions.back();
    increments_.push_back(inc);
    const Eigen::Vector3d s =
        trajectory_.positions.empty() ? pos : trajectory_.positions.back() + inc;
    trajectory_.push(t, s);

    FrameAnchor a;
    a.t = t;
    a.vo_position = pos;
    a.vo_rotation = cur_pose_.rotation;
    if (!keyframes_.empty()) {
        a.keyframe_index = int(keyframes_.size()) - 1;
        const PoseSE3& kf = keyframes_.back().pose;
        a.offset_in_kf = kf.rotation.transpose() * (pos - kf.translation);
        a.rot_in_kf = kf.rotation.transpose() * cur_pose_.rotation;
    }
    anchors_.push_back(a);
}

AdvanceResult VisualOdometry::advance(const RasterImage& frame, double timestamp) {
    frame.validate();
    if (frame.width != camera_.image_width || frame.height != camera_.image_height)
        throw std::invalid_argument("advance: frame does not match the camera model");
    AdvanceResult result;

    if (frame_id_ == 0) {
        cur_pose_ = PoseSE3{};  // VO origin at the first camera
        tracks_.clear();
        detect_new_features(frame);
        record_frame(timestamp);
        prev_frame_ = frame;
        ++frame_id_;
        result.tracked = true;
        return result;
    }

    const std::vector<TrackedFeature> prev_feats = [&] {
        std::vector<TrackedFeature> v;
        v.reserve(tracks_.size());
        for (const auto& t : tracks_) v.push_back({t.track_id, t.px});
        return v;
    }();
    const auto matches = track_features(prev_frame_, frame, prev_feats, last_flow_);
    if (!matches.empty()) {
        Eigen::Vector2d flow = Eigen::Vector2d::Zero();
        for (const auto& m : matches) flow += m.cur_px - m.prev_px;
        last_flow_ = flow / double(matches.size());
    }

    auto keep_matched_tracks = [&](const std::vector<FeatureMatch>& ms) {
        std::vector<TrackState> kept;
        kept.reserve(ms.size());
        for (const auto& m : ms) {
            auto it = std::find_if(tracks_.begin(), tracks_.end(), [&](const TrackState& t) {
                return t.track_id == m.track_id;
            });
            if (it == tracks_.end()) continue;
            TrackState t = *it;
            t.px = m.cur_px;
            kept.push_back(t);
        }
        tracks_ = std::move(kept);
    };

    if (!initialized_) {
        auto restart = [&]() -> AdvanceResult {
            frame_id_ = 0;
            trajectory_ = Trajectory{};
            increments_.clear();
            anchors_.clear();
            map_.clear();
            keyframes_.clear();
            lost_ = false;
            return advance(frame, timestamp);
        };
        if (int(matches.size()) < std::max(8, opts_.min_tracked_features)) return restart();
        keep_matched_tracks(matches);

        // Wait for parallax before initializing (short baselines triangulate
        // badly); chained tracking keeps first_px anchored at frame 0.
        double med_disp = 0.0;
        {
            std::vector<double> disp;
            for (const auto& t : tracks_) disp.push_back((t.px - t.first_px).norm());
            std::nth_element(disp.begin(), disp.begin() + disp.size() / 2, disp.end());
            med_disp = disp[disp.size() / 2];
        }
        if (med_disp < opts_.bootstrap_parallax_px && frame_id_ < opts_.bootstrap_max_wait) {
            record_frame(timestamp);  // still at the VO origin
            prev_frame_ = frame;
            ++frame_id_;
            result.tracked = true;
            return result;
        }

        PoseSE3 pose1;
        if (bootstrap_hint_) {
            pose1 = bootstrap_hint_(frame_id_);
        } else {
            std::vector<Eigen::Vector2d> pa, pb;
            for (const auto& t : tracks_) {
                pa.push_back(t.first_px);
                pb.push_back(t.px);
            }
            try {
                pose1 = relative_pose_from_matches(pa, pb, camera_);
            } catch (const std::invalid_argument&) {
                return restart();
            }
        }

        const PoseSE3 pose0;  // identity
        KeyFrame kf0;
        kf0.frame_id = 0;
        kf0.pose = pose0;
        kf0.timestamp = trajectory_.stamps.front();
        for (const auto& t : tracks_)
            kf0.observations.push_back({0, t.track_id, t.first_px.x(), t.first_px.y()});
        kf0.feature_count = int(kf0.observations.size());
        kf0.tracked_fraction = 1.0;
        keyframes_.push_back(kf0);

        int created = 0;
        for (auto& t : tracks_) {
            if (ray_parallax_deg(pose0, t.first_px.x(), t.first_px.y(), pose1, t.px.x(),
                                 t.px.y(), camera_) < opts_.min_parallax_deg)
                continue;
            const FeatureObservation oa{0, t.track_id, t.first_px.x(), t.first_px.y()};
            const FeatureObservation ob{frame_id_, t.track_id, t.px.x(), t.px.y()};
            try {
                if (auto mp = triangulate(oa, ob, pose0, pose1, camera_)) {
                    map_[t.track_id] = *mp;
                    t.has_point = true;
                    ++created;
                }
            } catch (const std::invalid_argument&) {
            }
        }
        if (created < opts_.min_tracked_features) return restart();

        cur_pose_ = pose1;
        initialized_ = true;

        KeyFrame kf1;
        kf1.frame_id = frame_id_;
        kf1.pose = pose1;
        kf1.timestamp = timestamp;
        for (const auto& t : tracks_)
            kf1.observations.push_back({frame_id_, t.track_id, t.px.x(), t.px.y()});
        kf1.feature_count = int(kf1.observations.size());
        kf1.tracked_fraction = 1.0;
        keyframes_.push_back(kf1);
        for (auto& t : tracks_)
            if (t.has_point) ++map_[t.track_id].observations;

        ref_kf_tracks_.clear();
        for (const auto& t : tracks_) ref_kf_tracks_.push_back(t.track_id);
        frames_since_kf_ = 0;

        record_frame(timestamp);
        detect_new_features(frame);
        prev_frame_ = frame;
        ++frame_id_;
        result.tracked = true;
        result.new_keyframe = keyframes_.back();
        return result;
    }

    // --- Tracking of an initialized sequence ---
    if (int(matches.size()) < opts_.min_tracked_features) {
        lost_ = true;
        result.lost = true;
        return result;  // hold the last pose; the previous frame stays the anchor
    }
    keep_matched_tracks(matches);

    std::vector<Eigen::Vector3d> pts;
    std::vector<Eigen::Vector2d> obs;
    std::vector<size_t> track_idx;
    for (size_t i = 0; i < tracks_.size(); ++i) {
        if (!tracks_[i].has_point) continue;
        pts.push_back(map_[tracks_[i].track_id].position);
        obs.push_back(tracks_[i].px);
        track_idx.push_back(i);
    }
    if (int(pts.size()) < std::max(4, opts_.min_tracked_features)) {
        lost_ = true;
        result.lost = true;
        return result;
    }

    PoseSE3 pose;
    try {
        pose = solve_pnp(pts, obs, camera_, &cur_pose_);
    } catch (const std::invalid_argument&) {
        lost_ = true;
        result.lost = true;
        return result;
    }

    // Residual gate and one re-solve; overshooting tracks are discarded.
    std::vector<Eigen::Vector3d> in_pts;
    std::vector<Eigen::Vector2d> in_obs;
    std::vector<char> keep_track(tracks_.size(), 1);
    for (size_t k = 0; k < pts.size(); ++k) {
        double err = std::numeric_limits<double>::infinity();
        try {
            err = (project(pose, pts[k], camera_) - obs[k]).norm();
        } catch (const std::invalid_argument&) {
        }
        if (err <= opts_.pnp_inlier_px) {
            in_pts.push_back(pts[k]);
            in_obs.push_back(obs[k]);
        } else if (err > 2.0 * opts_.pnp_inlier_px) {
            keep_track[track_idx[k]] = 0;
        }
    }
    if (int(in_pts.size()) < opts_.min_tracked_features) {
        lost_ = true;
        result.lost = true;
        return result;
    }
    try {
        pose = solve_pnp(in_pts, in_obs, camera_, &pose);
    } catch (const std::invalid_argument&) {
        lost_ = true;
        result.lost = true;
        return result;
    }
    {
        std::vector<TrackState> filtered;
        filtered.reserve(tracks_.size());
        for (size_t i = 0; i < tracks_.size(); ++i)
            if (keep_track[i]) filtered.push_back(tracks_[i]);
        tracks_ = std::move(filtered);
    }

    lost_ = false;
    cur_pose_ = pose;
    apply_drift_step();
    record_frame(timestamp);

    // Triangulate pending tracks once they carry enough parallax.
    for (auto& t : tracks_) {
        if (t.has_point || t.first_frame >= frame_id_) continue;
        if ((cur_pose_.translation - t.first_pose.translation).norm() < opts_.min_baseline)
            continue;
        if (ray_parallax_deg(t.first_pose, t.first_px.x(), t.first_px.y(), cur_pose_,
                             t.px.x(), t.px.y(), camera_) < opts_.min_parallax_deg)
            continue;
        const FeatureObservation oa{t.first_frame, t.track_id, t.first_px.x(), t.first_px.y()};
        const FeatureObservation ob{frame_id_, t.track_id, t.px.x(), t.px.y()};
        try {
            if (auto mp = triangulate(oa, ob, t.first_pose, cur_pose_, camera_)) {
                map_[t.track_id] = *mp;
                t.has_point = true;
            }
        } catch (const std::invalid_argument&) {
        }
    }

    // Keyframe decision against the reference keyframe's track set.
    int still_tracked = 0;
    for (const auto& t : tracks_)
        if (std::find(ref_kf_tracks_.begin(), ref_kf_tracks_.end(), t.track_id) !=
            ref_kf_tracks_.end())
            ++still_tracked;
    const double fraction =
        ref_kf_tracks_.empty() ? 0.0 : double(still_tracked) / double(ref_kf_tracks_.size());
    ++frames_since_kf_;

    if (is_keyframe(frames_since_kf_, int(tracks_.size()), fraction)) {
        KeyFrame kf;
        kf.frame_id = frame_id_;
        kf.pose = cur_pose_;
        kf.timestamp = timestamp;
        kf.feature_count = int(tracks_.size());
        kf.tracked_fraction = fraction;
        for (const auto& t : tracks_)
            kf.observations.push_back({frame_id_, t.track_id, t.px.x(), t.px.y()});
        keyframes_.push_back(kf);
        for (const auto& t : tracks_)
            if (t.has_point) ++map_[t.track_id].observations;
        detect_new_features(frame);
        ref_kf_tracks_.clear();
        for (const auto& t : tracks_) ref_kf_tracks_.push_back(t.track_id);
        frames_since_kf_ = 0;
        result.new_keyframe = keyframes_.back();
        // Anchor the just-recorded frame to the new keyframe.
        anchors_.back().keyframe_index = int(keyframes_.size()) - 1;
        anchors_.back().offset_in_kf = Eigen::Vector3d::Zero();
        anchors_.back().rot_in_kf = Eigen::Matrix3d::Identity();
    } else if (int(tracks_.size()) < (3 * opts_.max_features) / 5) {
        detect_new_features(frame);
    }

    prev_frame_ = frame;
    ++frame_id_;
    result.tracked = true;
    return result;
}

void VisualOdometry::update_keyframe_pose(int index, const PoseSE3& pose) {
    keyframes_.at(size_t(index)).pose = pose;
}

void VisualOdometry::update_map_point(int track_id, const Eigen::Vector3d& position) {
    auto it = map_.find(track_id);
    if (it != map_.end()) it->second.position = position;
}

void VisualOdometry::apply_tracking_correction(const PoseSE3& old_kf_pose,
                                               const PoseSE3& new_kf_pose) {
    const PoseSE3 delta = new_kf_pose * old_kf_pose.inverse();
    cur_pose_ = delta * cur_pose_;
}

}  // namespace terranav
