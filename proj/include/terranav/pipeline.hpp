#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "terranav/fusion_lba.hpp"
#include "terranav/georef.hpp"
#include "terranav/simworld.hpp"
#include "terranav/vo.hpp"

// End-to-end navigation pipeline: visual odometry per frame, phase-correlation
// geo-referencing per keyframe, trajectory alignment, and a sliding-window
// bundle adjustment fusing both after every new keyframe.

namespace terranav {

// Lazy frame source so long runs do not hold every render in memory.
class FrameProvider {
public:
    virtual ~FrameProvider() = default;
    virtual int count() const = 0;
    virtual double timestamp(int index) const = 0;
    virtual RasterImage frame(int index) = 0;
};

// Renders frames on demand from a prepared simulator world.
class WorldFrameProvider : public FrameProvider {
public:
    explicit WorldFrameProvider(const World& world) : world_(world) {}
    int count() const override { return int(world_.poses.size()); }
    double timestamp(int index) const override { return world_.poses[size_t(index)].t; }
    RasterImage frame(int index) override { return render_frame(world_, index); }

private:
    const World& world_;
};

// Reads frame_%06d.demr files from a run directory.
class DirectoryFrameProvider : public FrameProvider {
public:
    DirectoryFrameProvider(std::string dir, std::vector<double> stamps);
    int count() const override { return int(stamps_.size()); }
    double timestamp(int index) const override { return stamps_[size_t(index)]; }
    RasterImage frame(int index) override;

private:
    std::string dir_;
    std::vector<double> stamps_;
};

std::string frame_filename(int index);

struct PipelineOptions {
    double w_geo = 10.0;        // geo-residual confidence
    int window_size = 15;       // keyframes per LBA window
    double w_obs = 1.0;
    GeorefOptions georef;       // min_peak 0.05, Hann windowing
    bool similarity_alignment = false;  // 7-DOF trajectory alignment
    double inject_drift = 0.0;          // meters/frame added to the VO world
    uint64_t drift_seed = 1;
    bool lba_enabled = true;
};

struct SlamReport {
    int frames = 0;
    int keyframes = 0;
    int fixes_total = 0;
    int fixes_accepted = 0;
    double mean_lba_iters = 0.0;
    double track_ms = 0.0;   // summed stage times
    double georef_ms = 0.0;
    double lba_ms = 0.0;
    double wall_time_per_frame_ms = 0.0;  // processing only (no rendering/IO)
    double processing_fps = 0.0;
    bool aligned = false;  // a world alignment was established
    bool vo_lost = false;
};

struct SlamResult {
    std::vector<StampedPose> fused;    // world frame (VO frame if never aligned)
    std::vector<StampedPose> vo_only;  // raw VO, VO frame
    std::vector<GeoFix> fixes;         // world frame
    FrameTransform alignment;
    SlamReport report;
};

SlamResult run_slam(const DemGrid& dem, const PlannedPath& planned, FrameProvider& frames,
                    const CameraModel& camera, const IlluminationConfig& presumed_illum,
                    const PipelineOptions& opts,
                    const std::vector<StampedPose>* gt_bootstrap = nullptr);

// Thread cap for internally parallel stages: TERRANAV_THREADS, default 1.
int configured_threads();

// Deterministic parallel map over [0, n): results ordered, worker count from
// configured_threads() unless overridden.
void parallel_for(int n, const std::function<void(int)>& fn, int threads = 0);

}  // namespace terranav
