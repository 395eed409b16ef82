#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "terranav/georef.hpp"
#include "terranav/hillshade.hpp"
#include "terranav/raster.hpp"
#include "terranav/se3.hpp"

// Seeded synthetic worlds: fractal terrain, nadir trajectories, orthographic
// shaded renders with a continuous albedo texture, oracle anchor
// correspondences and planned paths. Every output is a pure function of the
// scenario, so runs are bit-reproducible.

namespace terranav {

enum class TrajectoryKind { circular, forward, scanning };

struct NoiseModel {
    double pixel_sigma = 0.0;        // additive Gaussian, intensity units
    double texture_amplitude = 0.3;  // albedo varies in [1 - a, 1]
};

struct ScenarioConfig {
    uint64_t seed = 1;
    int dem_size = 257;       // cells per side
    double cell_size = 1.0;   // meters
    double roughness = 0.55;  // [0, 1]
    double amplitude = 20.0;  // meters of relief
    IlluminationConfig illumination;           // true lighting of the scene
    IlluminationConfig presumed_illumination;  // used for reference chips
    CameraModel camera;
    TrajectoryKind trajectory = TrajectoryKind::circular;
    double flight_height = 50.0;  // meters above the highest terrain point
    double frame_rate = 1.0;      // Hz
    double duration = 900.0;      // seconds
    NoiseModel noise;
    bool albedo_texture = true;       // false renders pure shading (r = 1)
    double plan_perturbation = 2.0;   // +- meters, horizontal, on the planned path
    int anchors_per_frame = 80;       // target oracle density

    void validate() const;
};

ScenarioConfig scenario_from_json(const std::string& text);
std::string scenario_to_json(const ScenarioConfig& s);
ScenarioConfig load_scenario(const std::string& path);
void save_scenario(const ScenarioConfig& s, const std::string& path);
// FNV-1a over the canonical JSON form, as a hex string.
std::string scenario_hash(const ScenarioConfig& s);

// Diamond-square fractal surface (size = 2^n + 1), normalized to
// [0, amplitude]; other sizes fall back to value-noise octaves. Roughness 0
// produces a flat plane. Deterministic in the seed.
DemGrid generate_dem(int size, double cell_size, double roughness, double amplitude,
                     uint64_t seed);

// Continuous seeded albedo in [1 - amplitude, 1] (multi-octave value noise).
double albedo_at(double x, double y, uint64_t seed, double amplitude);

// Ground-truth nadir poses at frame-rate spacing; constant world altitude
// flight_height above the highest terrain point. Throws when the camera
// footprint would leave the scene.
std::vector<StampedPose> generate_trajectory(const ScenarioConfig& config,
                                             const DemGrid& dem);

struct FrameGroundTruth {
    int frame_id = 0;
    std::vector<int> anchor_ids;
    std::vector<Eigen::Vector2d> anchor_px;  // exact perspective projections
};

struct GroundTruth {
    std::vector<StampedPose> poses;
    std::vector<Eigen::Vector3d> anchors;  // world points on the terrain
    std::vector<FrameGroundTruth> frames;
};

// Prepared scene: DEM, gradients and poses, enough to render any frame.
struct World {
    ScenarioConfig scenario;
    DemGrid dem;
    GradientField grads;
    std::vector<StampedPose> poses;
};

World prepare_world(const ScenarioConfig& config);

// Orthographic nadir render of one pose at its Eq.-19 GSD: shading under the
// true illumination times the albedo texture, plus seeded pixel noise.
RasterImage render_frame(const World& world, int frame_index);

GroundTruth make_ground_truth(const World& world);
PlannedPath make_planned_path(const World& world);

struct RenderResult {
    std::vector<RasterImage> frames;
    GroundTruth gt;
    PlannedPath planned;
};
RenderResult render_sequence(const ScenarioConfig& config);

enum class SweepAxis { intensity, azimuth, elevation };

// Scenarios identical to base except the swept true-illumination field; the
// presumed illumination stays at the base value. Values are validated
// against the axis range.
std::vector<ScenarioConfig> illumination_sweep(const ScenarioConfig& base, SweepAxis axis,
                                               const std::vector<double>& values);

// Seed-stable scalar helpers shared by the simulator and tests.
uint64_t mix64(uint64_t a, uint64_t b);
double seeded_uniform(uint64_t key);          // [0, 1)
double seeded_normal(uint64_t key);           // standard normal

}  // namespace terranav
