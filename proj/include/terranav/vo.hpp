#pragma once

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "terranav/hillshade.hpp"
#include "terranav/raster.hpp"
#include "terranav/se3.hpp"

// Frame-to-frame visual odometry: min-eigenvalue corner detection, ZNCC patch
// tracking, triangulation, PnP and the keyframe rule. The VO frame takes the
// first camera position as origin; metric scale comes from the bootstrap
// baseline (simulator relative pose, or a unit baseline from the essential
// matrix).

namespace terranav {

struct FeatureObservation {
    int frame_id = 0;
    int track_id = 0;
    double u = 0.0;
    double v = 0.0;
};

struct MapPoint {
    int track_id = 0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // VO frame, meters
    int observations = 0;
};

struct KeyFrame {
    int frame_id = 0;
    PoseSE3 pose;                   // camera-to-world (VO frame)
    int feature_count = 0;
    double tracked_fraction = 0.0;  // vs the reference keyframe
    double timestamp = 0.0;
    std::vector<FeatureObservation> observations;  // live tracks at creation
};

// --- Geometry ---------------------------------------------------------------

// Pinhole projection of a world/VO point through a camera-to-world pose.
// Throws std::invalid_argument when the point has non-positive depth.
Eigen::Vector2d project(const PoseSE3& pose, const Eigen::Vector3d& point,
                        const CameraModel& camera);

// Midpoint triangulation from two observations. Throws on a degenerate
// (near-zero) baseline or near-parallel rays; returns nullopt when the
// reprojection residual exceeds 2 px in either frame.
std::optional<MapPoint> triangulate(const FeatureObservation& obs_a,
                                    const FeatureObservation& obs_b,
                                    const PoseSE3& pose_a, const PoseSE3& pose_b,
                                    const CameraModel& camera);

// Pose from 3D-2D correspondences: DLT initialization (n >= 6) refined by
// Gauss-Newton on the reprojection error, or refinement of `prior` when
// given. Throws on fewer than 4 correspondences or a degenerate system.
PoseSE3 solve_pnp(const std::vector<Eigen::Vector3d>& points,
                  const std::vector<Eigen::Vector2d>& pixels,
                  const CameraModel& camera,
                  const PoseSE3* prior = nullptr);

// Relative pose of the second frame w.r.t. the first from pixel
// correspondences via the essential matrix (8-point), with a unit baseline.
PoseSE3 relative_pose_from_matches(const std::vector<Eigen::Vector2d>& px_a,
                                   const std::vector<Eigen::Vector2d>& px_b,
                                   const CameraModel& camera);

// --- Features ---------------------------------------------------------------

// Up to max_n minimum-eigenvalue corners, non-maximum suppression radius
// 5 px, strongest first. May return fewer (or none on flat images).
std::vector<Eigen::Vector2d> detect_corners(const RasterImage& img, int max_n);

struct TrackedFeature {
    int track_id = 0;
    Eigen::Vector2d px = Eigen::Vector2d::Zero();
};

struct FeatureMatch {
    int track_id = 0;
    Eigen::Vector2d prev_px = Eigen::Vector2d::Zero();
    Eigen::Vector2d cur_px = Eigen::Vector2d::Zero();
    double score = 0.0;  // ZNCC in [-1, 1]
};

// ZNCC patch tracking (11x11 patch, +-24 px search, matches below 0.7
// dropped) with parabolic sub-pixel refinement. The search window is
// centered at the previous position plus `predicted_flow` (e.g. from a
// constant-velocity model) without shrinking the radius.
std::vector<FeatureMatch> track_features(const RasterImage& prev,
                                         const RasterImage& cur,
                                         const std::vector<TrackedFeature>& prev_feats,
                                         const Eigen::Vector2d& predicted_flow =
                                             Eigen::Vector2d::Zero());

// Keyframe rule: more than 20 frames since the last keyframe AND more than
// 50 features in the current frame AND tracked fraction below 0.90.
bool is_keyframe(int frames_since_last_kf, int current_feature_count,
                 double tracked_fraction);

// --- State machine -----------------------------------------------------------

struct VoOptions {
    int max_features = 200;
    int min_tracked_features = 12;
    double pnp_inlier_px = 3.0;      // residual gate after the first solve
    double min_parallax_deg = 1.0;   // triangulation acceptance
    double min_baseline = 1e-6;      // meters
    double bootstrap_parallax_px = 10.0;  // median displacement before init
    int bootstrap_max_wait = 30;          // frames
    // Deterministic drift injection for fusion experiments: every frame the
    // current pose and the whole local map are translated by this many meters
    // along a slowly wandering direction (seeded). Zero disables it.
    double drift_per_frame = 0.0;
    uint64_t drift_seed = 1;
};

struct AdvanceResult {
    bool tracked = false;
    bool lost = false;
    std::optional<KeyFrame> new_keyframe;
};

class VisualOdometry {
public:
    VisualOdometry(const CameraModel& camera, const VoOptions& opts = {});

    // Bootstrap hint: pose of frame k expressed in the frame-0 camera frame
    // (e.g. from the simulator ground truth). Initialization waits until the
    // tracks carry enough parallax, then uses the hint for that frame pair;
    // without a hint the essential matrix with a unit baseline is used.
    void set_bootstrap_pose_hint(std::function<PoseSE3(int frame_id)> hint);

    AdvanceResult advance(const RasterImage& frame, double timestamp);

    bool initialized() const { return initialized_; }
    bool lost() const { return lost_; }
    const PoseSE3& current_pose() const { return cur_pose_; }
    const Trajectory& trajectory() const { return trajectory_; }
    const std::vector<Eigen::Vector3d>& increments() const { return increments_; }
    const std::map<int, MapPoint>& map_points() const { return map_; }
    std::vector<KeyFrame>& keyframes() { return keyframes_; }
    const std::vector<KeyFrame>& keyframes() const { return keyframes_; }
    int frame_count() const { return frame_id_; }

    // Fusion write-back: replace a keyframe pose / map point after LBA and
    // propagate the last-keyframe correction to the current tracking pose.
    void update_keyframe_pose(int index, const PoseSE3& pose);
    void update_map_point(int track_id, const Eigen::Vector3d& position);
    void apply_tracking_correction(const PoseSE3& old_kf_pose, const PoseSE3& new_kf_pose);

    // Per-frame record used to rebuild a corrected full trajectory: position
    // expressed in the coordinates of the most recent keyframe.
    struct FrameAnchor {
        double t = 0.0;
        int keyframe_index = -1;           // -1 before the first keyframe
        Eigen::Vector3d offset_in_kf = Eigen::Vector3d::Zero();
        Eigen::Matrix3d rot_in_kf = Eigen::Matrix3d::Identity();
        Eigen::Vector3d vo_position = Eigen::Vector3d::Zero();
        Eigen::Matrix3d vo_rotation = Eigen::Matrix3d::Identity();
    };
    const std::vector<FrameAnchor>& frame_anchors() const { return anchors_; }

private:
    struct TrackState {
        int track_id;
        Eigen::Vector2d px;
        int first_frame;
        PoseSE3 first_pose;
        Eigen::Vector2d first_px;
        bool has_point;
    };

    void detect_new_features(const RasterImage& frame);
    void apply_drift_step();
    void record_frame(double t);

    CameraModel camera_;
    VoOptions opts_;
    bool initialized_ = false;
    bool lost_ = false;
    std::function<PoseSE3(int)> bootstrap_hint_;

    int frame_id_ = 0;
    int next_track_id_ = 0;
    RasterImage prev_frame_;
    std::vector<TrackState> tracks_;
    std::map<int, MapPoint> map_;
    std::vector<KeyFrame> keyframes_;
    PoseSE3 cur_pose_;
    Trajectory trajectory_;
    std::vector<Eigen::Vector3d> increments_;
    std::vector<FrameAnchor> anchors_;
    int frames_since_kf_ = 0;
    std::vector<int> ref_kf_tracks_;
    Eigen::Vector3d drift_dir_ = Eigen::Vector3d::UnitX();
    uint64_t drift_rng_ = 0;
    Eigen::Vector2d last_flow_ = Eigen::Vector2d::Zero();
};

}  // namespace terranav
