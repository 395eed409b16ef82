#include "terranav/simworld.hpp"

#include "terranav/vo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace terranav {

using json = nlohmann::json;

// --- Seeded scalar randomness -------------------------------------------------

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d4a9f5cd5b7f9bULL;
    return x ^ (x >> 31);
}

}  // namespace

uint64_t mix64(uint64_t a, uint64_t b) { return splitmix64(a ^ (b * 0x9e3779b97f4a7c15ULL)); }

double seeded_uniform(uint64_t key) {
    return double(splitmix64(key) >> 11) * 0x1.0p-53;
}

double seeded_normal(uint64_t key) {
    // Box-Muller on two decorrelated uniforms.
    const double u1 = std::max(seeded_uniform(key), 1e-300);
    const double u2 = seeded_uniform(mix64(key, 0x5bf03635ULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// --- Scenario -----------------------------------------------------------------

void ScenarioConfig::validate() const {
    if (dem_size < 17) throw std::invalid_argument("scenario: dem_size too small");
    if (!(cell_size > 0)) throw std::invalid_argument("scenario: cell_size must be > 0");
    if (!(roughness >= 0 && roughness <= 1))
        throw std::invalid_argument("scenario: roughness outside [0, 1]");
    if (!(amplitude >= 0)) throw std::invalid_argument("scenario: negative amplitude");
    illumination.validate();
    presumed_illumination.validate();
    camera.validate();
    if (!(flight_height > 0)) throw std::invalid_argument("scenario: flight_height must be > 0");
    if (!(frame_rate > 0)) throw std::invalid_argument("scenario: frame_rate must be > 0");
    if (!(duration > 0)) throw std::invalid_argument("scenario: duration must be > 0");
    if (!(noise.pixel_sigma >= 0)) throw std::invalid_argument("scenario: negative pixel noise");
    if (!(noise.texture_amplitude >= 0 && noise.texture_amplitude < 1))
        throw std::invalid_argument("scenario: texture amplitude outside [0, 1)");
    if (!(plan_perturbation >= 0))
        throw std::invalid_argument("scenario: negative plan perturbation");
    if (anchors_per_frame < 0) throw std::invalid_argument("scenario: negative anchor count");
}

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

json illum_to_json(const IlluminationConfig& i) {
    return json{{"intensity", i.intensity},
                {"azimuth_deg", i.azimuth / kDeg},
                {"elevation_deg", i.elevation / kDeg}};
}

IlluminationConfig illum_from_json(const json& j) {
    IlluminationConfig i;
    i.intensity = j.at("intensity").get<double>();
    i.azimuth = j.at("azimuth_deg").get<double>() * kDeg;
    i.elevation = j.at("elevation_deg").get<double>() * kDeg;
    return i;
}

const char* kind_name(TrajectoryKind k) {
    switch (k) {
        case TrajectoryKind::circular: return "circular";
        case TrajectoryKind::forward: return "forward";
        case TrajectoryKind::scanning: return "scanning";
    }
    return "circular";
}

TrajectoryKind kind_from_name(const std::string& s) {
    if (s == "circular") return TrajectoryKind::circular;
    if (s == "forward") return TrajectoryKind::forward;
    if (s == "scanning") return TrajectoryKind::scanning;
    throw std::invalid_argument("scenario: unknown trajectory kind '" + s + "'");
}

}  // namespace

std::string scenario_to_json(const ScenarioConfig& s) {
    json j;
    j["seed"] = s.seed;
    j["dem_size"] = s.dem_size;
    j["cell_size_m"] = s.cell_size;
    j["roughness"] = s.roughness;
    j["amplitude_m"] = s.amplitude;
    j["illumination"] = illum_to_json(s.illumination);
    j["presumed_illumination"] = illum_to_json(s.presumed_illumination);
    j["camera"] = {{"focal_mm", s.camera.focal_length_mm},
                   {"sensor_mm", s.camera.sensor_size_mm},
                   {"image_width", s.camera.image_width},
                   {"image_height", s.camera.image_height}};
    j["trajectory"] = kind_name(s.trajectory);
    j["flight_height_m"] = s.flight_height;
    j["frame_rate_hz"] = s.frame_rate;
    j["duration_s"] = s.duration;
    j["noise"] = {{"pixel_sigma", s.noise.pixel_sigma},
                  {"texture_amplitude", s.noise.texture_amplitude}};
    j["albedo_texture"] = s.albedo_texture;
    j["plan_perturbation_m"] = s.plan_perturbation;
    j["anchors_per_frame"] = s.anchors_per_frame;
    return j.dump(2);
}

ScenarioConfig scenario_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("scenario: invalid JSON: ") + e.what());
    }
    ScenarioConfig s;
    try {
        s.seed = j.at("seed").get<uint64_t>();
        s.dem_size = j.at("dem_size").get<int>();
        s.cell_size = j.at("cell_size_m").get<double>();
        s.roughness = j.at("roughness").get<double>();
        s.amplitude = j.at("amplitude_m").get<double>();
        s.illumination = illum_from_json(j.at("illumination"));
        s.presumed_illumination = illum_from_json(j.at("presumed_illumination"));
        const json& c = j.at("camera");
        s.camera.focal_length_mm = c.at("focal_mm").get<double>();
        s.camera.sensor_size_mm = c.at("sensor_mm").get<double>();
        s.camera.image_width = c.at("image_width").get<int>();
        s.camera.image_height = c.at("image_height").get<int>();
        s.trajectory = kind_from_name(j.at("trajectory").get<std::string>());
        s.flight_height = j.at("flight_height_m").get<double>();
        s.frame_rate = j.at("frame_rate_hz").get<double>();
        s.duration = j.at("duration_s").get<double>();
        if (j.contains("noise")) {
            s.noise.pixel_sigma = j["noise"].value("pixel_sigma", 0.0);
            s.noise.texture_amplitude = j["noise"].value("texture_amplitude", 0.3);
        }
        s.albedo_texture = j.value("albedo_texture", true);
        s.plan_perturbation = j.value("plan_perturbation_m", 2.0);
        s.anchors_per_frame = j.value("anchors_per_frame", 80);
    } catch (const json::out_of_range& e) {
        throw std::invalid_argument(std::string("scenario: missing field: ") + e.what());
    } catch (const json::type_error& e) {
        throw std::invalid_argument(std::string("scenario: bad field type: ") + e.what());
    }
    s.validate();
    return s;
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("missing scenario file: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return scenario_from_json(text);
}

void save_scenario(const ScenarioConfig& s, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << scenario_to_json(s) << "\n";
}

std::string scenario_hash(const ScenarioConfig& s) {
    const std::string text = scenario_to_json(s);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// --- Terrain ------------------------------------------------------------------

namespace {

bool is_pow2_plus_1(int n) { return n >= 3 && ((n - 1) & (n - 2)) == 0; }

double lattice_value(uint64_t seed, int octave, long ix, long iy) {
    uint64_t k = mix64(seed, 0xA1B2C3D4ULL + uint64_t(octave));
    k = mix64(k, uint64_t(uint32_t(ix)) | (uint64_t(uint32_t(iy)) << 32));
    return seeded_uniform(k);
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Multi-octave value noise in [0, 1), continuous in (x, y).
double value_noise(double x, double y, uint64_t seed, double base_wavelength, int octaves,
                   double persistence) {
    double sum = 0.0, norm = 0.0, amp = 1.0, wl = base_wavelength;
    for (int o = 0; o < octaves; ++o) {
        const double fx = x / wl, fy = y / wl;
        const long ix = long(std::floor(fx)), iy = long(std::floor(fy));
        const double tx = smoothstep(fx - double(ix));
        const double ty = smoothstep(fy - double(iy));
        const double v00 = lattice_value(seed, o, ix, iy);
        const double v10 = lattice_value(seed, o, ix + 1, iy);
        const double v01 = lattice_value(seed, o, ix, iy + 1);
        const double v11 = lattice_value(seed, o, ix + 1, iy + 1);
        sum += amp * ((1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10 +
                      (1 - tx) * ty * v01 + tx * ty * v11);
        norm += amp;
        amp *= persistence;
        wl *= 0.5;
    }
    return sum / norm;
}

}  // namespace

double albedo_at(double x, double y, uint64_t seed, double amplitude) {
    if (amplitude <= 0.0) return 1.0;
    const double n = value_noise(x, y, mix64(seed, 0x7e87a7e0ULL), 6.0, 5, 0.55);
    return 1.0 - amplitude * n;
}

DemGrid generate_dem(int size, double cell_size, double roughness, double amplitude,
                     uint64_t seed) {
    if (size < 3) throw std::invalid_argument("generate_dem: size must be >= 3");
    if (!(cell_size > 0)) throw std::invalid_argument("generate_dem: cell_size must be > 0");
    if (!(roughness >= 0 && roughness <= 1))
        throw std::invalid_argument("generate_dem: roughness outside [0, 1]");
    if (!(amplitude >= 0)) throw std::invalid_argument("generate_dem: negative amplitude");

    DemGrid g;
    g.width = size;
    g.height = size;
    g.cell_size = cell_size;
    g.origin_x = 0.0;
    g.origin_y = 0.0;
    g.elevations.assign(size_t(size) * size, 0.0);

    uint64_t rng = mix64(seed, 0xD5A6C7E1ULL);
    auto rnd = [&rng]() {  // U(-1, 1), sequential deterministic stream
        rng = splitmix64(rng);
        return 2.0 * (double(rng >> 11) * 0x1.0p-53) - 1.0;
    };

    if (is_pow2_plus_1(size)) {
        const double persistence = 0.35 + 0.4 * roughness;
        double amp = roughness;
        g.at(0, 0) = amp * rnd();
        g.at(size - 1, 0) = amp * rnd();
        g.at(0, size - 1) = amp * rnd();
        g.at(size - 1, size - 1) = amp * rnd();
        for (int step = size - 1; step > 1; step /= 2) {
            const int half = step / 2;
            // Diamond step
            for (int y = half; y < size; y += step)
                for (int x = half; x < size; x += step) {
                    const double avg = (g.at(x - half, y - half) + g.at(x + half, y - half) +
                                        g.at(x - half, y + half) + g.at(x + half, y + half)) /
                                       4.0;
                    g.at(x, y) = avg + amp * rnd();
                }
            // Square step
            for (int y = 0; y < size; y += half)
                for (int x = (y / half) % 2 == 0 ? half : 0; x < size; x += step) {
                    double sum = 0.0;
                    int cnt = 0;
                    if (x - half >= 0) { sum += g.at(x - half, y); ++cnt; }
                    if (x + half < size) { sum += g.at(x + half, y); ++cnt; }
                    if (y - half >= 0) { sum += g.at(x, y - half); ++cnt; }
                    if (y + half < size) { sum += g.at(x, y + half); ++cnt; }
                    g.at(x, y) = sum / cnt + amp * rnd();
                }
            amp *= persistence;
        }
    } else {
        // Octave fallback for arbitrary sizes.
        const double persistence = 0.4 + 0.35 * roughness;
        const double wl = double(size) * cell_size / 3.0;
        for (int j = 0; j < size; ++j)
            for (int i = 0; i < size; ++i)
                g.at(i, j) = roughness * value_noise(i * cell_size, j * cell_size,
                                                     mix64(seed, 0xBADCAFEULL), wl, 6,
                                                     persistence);
    }

    double lo = g.elevations[0], hi = g.elevations[0];
    for (double e : g.elevations) {
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    if (hi - lo > 1e-12 && amplitude > 0) {
        const double scale = amplitude / (hi - lo);
        for (double& e : g.elevations) e = (e - lo) * scale;
    } else {
        for (double& e : g.elevations) e = 0.0;
    }
    return g;
}

// --- Trajectories ---------------------------------------------------------------

std::vector<StampedPose> generate_trajectory(const ScenarioConfig& config,
                                             const DemGrid& dem) {
    config.validate();
    dem.validate();

    double hi = dem.elevations[0], lo = dem.elevations[0];
    for (double e : dem.elevations) {
        hi = std::max(hi, e);
        lo = std::min(lo, e);
    }
    const double z = hi + config.flight_height;
    const double fp_half = (z - lo) * std::tan(config.camera.half_fov());
    const double margin = 2.0 * dem.cell_size;
    const double x0 = dem.min_x() + fp_half + margin;
    const double x1 = dem.max_x() - fp_half - margin;
    const double y0 = dem.min_y() + fp_half + margin;
    const double y1 = dem.max_y() - fp_half - margin;
    if (x1 <= x0 || y1 <= y0)
        throw std::invalid_argument("generate_trajectory: camera footprint exceeds the scene");

    const int n = int(std::lround(config.duration * config.frame_rate));
    if (n < 2) throw std::invalid_argument("generate_trajectory: fewer than 2 frames");

    const double cx = 0.5 * (dem.min_x() + dem.max_x());
    const double cy = 0.5 * (dem.min_y() + dem.max_y());

    std::vector<StampedPose> poses;
    poses.reserve(size_t(n));
    auto push = [&](int k, double px, double py) {
        if (px < x0 || px > x1 || py < y0 || py > y1)
            throw std::invalid_argument("generate_trajectory: camera footprint exits the scene");
        StampedPose sp;
        sp.t = double(k) / config.frame_rate;
        sp.pose = nadir_pose({px, py, z});
        poses.push_back(sp);
    };

    switch (config.trajectory) {
        case TrajectoryKind::circular: {
            const double radius = 0.7 * std::min(0.5 * (x1 - x0), 0.5 * (y1 - y0));
            if (radius < dem.cell_size)
                throw std::invalid_argument("generate_trajectory: scene too small for a loop");
            for (int k = 0; k < n; ++k) {
                const double phi = 2.0 * std::numbers::pi * double(k) / double(n);
                push(k, cx + radius * std::cos(phi), cy + radius * std::sin(phi));
            }
            break;
        }
        case TrajectoryKind::forward: {
            for (int k = 0; k < n; ++k) {
                const double t = double(k) / double(n - 1);
                push(k, x0 + t * (x1 - x0), cy);
            }
            break;
        }
        case TrajectoryKind::scanning: {
            // Boustrophedon lawnmower over the safe rectangle, parameterized
            // by arc length at constant speed.
            const double lane_dy = std::max(1.2 * fp_half, dem.cell_size);
            const int lanes = std::max(2, int(std::floor((y1 - y0) / lane_dy)) + 1);
            std::vector<Eigen::Vector2d> verts;
            for (int l = 0; l < lanes; ++l) {
                const double y = std::min(y0 + l * lane_dy, y1);
                if (l % 2 == 0) {
                    verts.emplace_back(x0, y);
                    verts.emplace_back(x1, y);
                } else {
                    verts.emplace_back(x1, y);
                    verts.emplace_back(x0, y);
                }
            }
            double total = 0.0;
            for (size_t i = 1; i < verts.size(); ++i) total += (verts[i] - verts[i - 1]).norm();
            const double speed = total / config.duration;
            double acc = 0.0;
            size_t seg = 1;
            for (int k = 0; k < n; ++k) {
                double want = speed * double(k) / config.frame_rate;
                want = std::min(want, total);
                while (seg + 1 < verts.size() &&
                       acc + (verts[seg] - verts[seg - 1]).norm() < want) {
                    acc += (verts[seg] - verts[seg - 1]).norm();
                    ++seg;
                }
                const double seg_len = (verts[seg] - verts[seg - 1]).norm();
                const double t = seg_len > 0 ? std::clamp((want - acc) / seg_len, 0.0, 1.0) : 0.0;
                const Eigen::Vector2d p = verts[seg - 1] + t * (verts[seg] - verts[seg - 1]);
                push(k, p.x(), p.y());
            }
            break;
        }
    }
    return poses;
}

// --- Rendering ------------------------------------------------------------------

World prepare_world(const ScenarioConfig& config) {
    config.validate();
    World w;
    w.scenario = config;
    w.dem = generate_dem(config.dem_size, config.cell_size, config.roughness,
                         config.amplitude, config.seed);
    w.grads = gradient_field(w.dem);
    w.poses = generate_trajectory(config, w.dem);
    return w;
}

RasterImage render_frame(const World& world, int frame_index) {
    if (frame_index < 0 || frame_index >= int(world.poses.size()))
        throw std::invalid_argument("render_frame: frame index out of range");
    const ScenarioConfig& sc = world.scenario;
    const StampedPose& sp = world.poses[size_t(frame_index)];
    const Eigen::Vector3d c = sp.pose.translation;
    const FootprintInfo fp = footprint_and_gsd(world.dem, c.x(), c.y(), c.z(), sc.camera);

    RasterImage img;
    img.width = sc.camera.image_width;
    img.height = sc.camera.image_height;
    img.pixels.resize(size_t(img.width) * img.height);
    const double cx = sc.camera.cx(), cy = sc.camera.cy();
    const uint64_t noise_key = mix64(sc.seed, 0xF00D0000ULL + uint64_t(frame_index));
    const double tex = sc.albedo_texture ? sc.noise.texture_amplitude : 0.0;
    for (int v = 0; v < img.height; ++v) {
        const double y = c.y() - (v - cy) * fp.gsd;
        for (int u = 0; u < img.width; ++u) {
            const double x = c.x() + (u - cx) * fp.gsd;
            double val = shade_at(world.dem, world.grads, sc.illumination, x, y, 1.0, true);
            if (tex > 0.0) val *= albedo_at(x, y, sc.seed, tex);
            if (sc.noise.pixel_sigma > 0.0)
                val += sc.noise.pixel_sigma *
                       seeded_normal(mix64(noise_key, uint64_t(v) * img.width + u));
            img.at(u, v) = std::max(0.0, val);
        }
    }
    return img;
}

GroundTruth make_ground_truth(const World& world) {
    const ScenarioConfig& sc = world.scenario;
    GroundTruth gt;
    gt.poses = world.poses;

    // Global anchor cloud sized so each footprint sees roughly the target
    // count. Anchors live on the terrain surface.
    const Eigen::Vector3d c0 = world.poses.front().pose.translation;
    const FootprintInfo fp0 =
        footprint_and_gsd(world.dem, c0.x(), c0.y(), c0.z(), sc.camera);
    const double scene_w = world.dem.max_x() - world.dem.min_x();
    const double scene_h = world.dem.max_y() - world.dem.min_y();
    const double fp_area = std::max(1.0, 4.0 * fp0.half_width * fp0.half_width);
    int n_anchors = int(std::ceil(double(sc.anchors_per_frame) * scene_w * scene_h / fp_area));
    n_anchors = std::clamp(n_anchors, sc.anchors_per_frame, 40000);

    const uint64_t key = mix64(sc.seed, 0xA2C401ULL);
    gt.anchors.reserve(size_t(n_anchors));
    for (int i = 0; i < n_anchors; ++i) {
        const double x =
            world.dem.min_x() + seeded_uniform(mix64(key, 2 * uint64_t(i))) * scene_w;
        const double y =
            world.dem.min_y() + seeded_uniform(mix64(key, 2 * uint64_t(i) + 1)) * scene_h;
        gt.anchors.emplace_back(x, y, bilinear_sample(world.dem, x, y));
    }

    gt.frames.reserve(world.poses.size());
    for (size_t k = 0; k < world.poses.size(); ++k) {
        FrameGroundTruth f;
        f.frame_id = int(k);
        const Eigen::Vector3d c = world.poses[k].pose.translation;
        const double reach = 1.3 * fp0.half_width;
        for (size_t a = 0; a < gt.anchors.size(); ++a) {
            const Eigen::Vector3d& pt = gt.anchors[a];
            if (std::abs(pt.x() - c.x()) > reach || std::abs(pt.y() - c.y()) > reach) continue;
            Eigen::Vector2d px;
            try {
                px = project(world.poses[k].pose, pt, sc.camera);
            } catch (const std::invalid_argument&) {
                continue;
            }
            if (px.x() < 0 || px.y() < 0 || px.x() > sc.camera.image_width - 1 ||
                px.y() > sc.camera.image_height - 1)
                continue;
            f.anchor_ids.push_back(int(a));
            f.anchor_px.push_back(px);
        }
        gt.frames.push_back(std::move(f));
    }
    return gt;
}

PlannedPath make_planned_path(const World& world) {
    const ScenarioConfig& sc = world.scenario;
    PlannedPath path;
    const uint64_t key = mix64(sc.seed, 0x91AFULL);
    path.entries.reserve(world.poses.size());
    for (size_t k = 0; k < world.poses.size(); ++k) {
        const Eigen::Vector3d c = world.poses[k].pose.translation;
        PlannedPathEntry e;
        e.t = world.poses[k].t;
        const double px = sc.plan_perturbation *
                          (2.0 * seeded_uniform(mix64(key, 2 * uint64_t(k))) - 1.0);
        const double py = sc.plan_perturbation *
                          (2.0 * seeded_uniform(mix64(key, 2 * uint64_t(k) + 1)) - 1.0);
        e.x = c.x() + px;
        e.y = c.y() + py;
        e.z = c.z();
        path.entries.push_back(e);
    }
    path.validate();
    return path;
}

RenderResult render_sequence(const ScenarioConfig& config) {
    const World world = prepare_world(config);
    RenderResult out;
    out.frames.reserve(world.poses.size());
    for (size_t k = 0; k < world.poses.size(); ++k)
        out.frames.push_back(render_frame(world, int(k)));
    out.gt = make_ground_truth(world);
    out.planned = make_planned_path(world);
    return out;
}

std::vector<ScenarioConfig> illumination_sweep(const ScenarioConfig& base, SweepAxis axis,
                                               const std::vector<double>& values) {
    base.validate();
    std::vector<ScenarioConfig> out;
    out.reserve(values.size());
    for (double v : values) {
        ScenarioConfig s = base;
        switch (axis) {
            case SweepAxis::intensity:
                if (!(v >= 0)) throw std::invalid_argument("sweep: intensity must be >= 0");
                s.illumination.intensity = v;
                break;
            case SweepAxis::azimuth:
                if (!(v >= -180.0 && v <= 180.0))
                    throw std::invalid_argument("sweep: azimuth outside [-180, 180] deg");
                s.illumination.azimuth = v * kDeg;
                break;
            case SweepAxis::elevation:
                if (!(v > 0.0 && v <= 90.0))
                    throw std::invalid_argument("sweep: elevation outside (0, 90] deg");
                s.illumination.elevation = v * kDeg;
                break;
        }
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace terranav
