#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "terranav/evalkit.hpp"
#include "terranav/fusion_lba.hpp"
#include "terranav/pipeline.hpp"
#include "terranav/plot.hpp"
#include "terranav/simworld.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace terranav;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr double kDeg = 3.14159265358979323846 / 180.0;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Collects per-stage timings and declared outputs, then appends one record to
// <run>/manifest.json. Every declared output must exist at write time.
class ManifestWriter {
public:
    ManifestWriter(std::string run_dir, std::string subcommand)
        : run_dir_(std::move(run_dir)), subcommand_(std::move(subcommand)),
          start_(Clock::now()) {}

    void set_scenario_hash(const std::string& h) { scenario_hash_ = h; }
    void stage(const std::string& name, double ms) { timings_[name] = ms; }
    void output(const std::string& rel_path) { outputs_.push_back(rel_path); }

    void write() {
        json rec;
        rec["subcommand"] = subcommand_;
        rec["version"] = kVersion;
        if (!scenario_hash_.empty()) rec["scenario_hash"] = scenario_hash_;
        json t;
        for (const auto& [k, v] : timings_) t[k] = v;
        rec["timings_ms"] = t;
        rec["total_wall_ms"] = ms_since(start_);
        rec["outputs"] = outputs_;
        for (const auto& o : outputs_)
            if (!fs::exists(fs::path(run_dir_) / o))
                throw std::runtime_error("manifest: declared output missing: " + o);

        const fs::path path = fs::path(run_dir_) / "manifest.json";
        json all = json::array();
        if (fs::exists(path)) {
            std::ifstream in(path);
            try {
                in >> all;
                if (!all.is_array()) all = json::array();
            } catch (...) {
                all = json::array();
            }
        }
        all.push_back(rec);
        std::ofstream out(path, std::ios::trunc);
        out << all.dump(2) << "\n";
    }

private:
    std::string run_dir_;
    std::string subcommand_;
    std::string scenario_hash_;
    std::map<std::string, double> timings_;
    std::vector<std::string> outputs_;
    Clock::time_point start_;
};

void write_planned_csv(const std::string& path, const PlannedPath& planned) {
    std::ofstream f(path, std::ios::trunc);
    f << "t,x,y,z\n";
    f.precision(12);
    for (const auto& e : planned.entries)
        f << e.t << "," << e.x << "," << e.y << "," << e.z << "\n";
}

PlannedPath read_planned_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("missing planned path: " + path);
    PlannedPath p;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        PlannedPathEntry e;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &e.t, &e.x, &e.y, &e.z) != 4)
            throw std::runtime_error("malformed planned.csv line: " + line);
        p.entries.push_back(e);
    }
    p.validate();
    return p;
}

void write_fixes_csv(const std::string& path, const std::vector<GeoFix>& fixes) {
    std::ofstream f(path, std::ios::trunc);
    f << "kf_id,t,x,y,z,gsd,peak,accepted\n";
    f.precision(12);
    for (const auto& x : fixes)
        f << x.keyframe_id << "," << x.t << "," << x.position.x() << "," << x.position.y()
          << "," << x.position.z() << "," << x.gsd << "," << x.peak << ","
          << (x.accepted ? 1 : 0) << "\n";
}

Trajectory trajectory_from_tum(const std::string& path, const std::string& frame) {
    return trajectory_from_poses(load_tum(path), frame);
}

// --- Subcommands ---------------------------------------------------------------

int cmd_gen_scene(const std::string& scenario_path, const std::string& out_dir) {
    const ScenarioConfig sc = load_scenario(scenario_path);
    fs::create_directories(out_dir);
    ManifestWriter manifest(out_dir, "gen-scene");
    manifest.set_scenario_hash(scenario_hash(sc));

    const auto t0 = Clock::now();
    const DemGrid dem = generate_dem(sc.dem_size, sc.cell_size, sc.roughness, sc.amplitude,
                                     sc.seed);
    manifest.stage("generate_dem", ms_since(t0));

    save_dem(dem, (fs::path(out_dir) / "scene.demr").string());
    save_scenario(sc, (fs::path(out_dir) / "scenario.json").string());
    manifest.output("scene.demr");
    manifest.output("scene.demr.json");
    manifest.output("scenario.json");
    manifest.write();
    std::cout << "scene written to " << out_dir << " (" << dem.width << "x" << dem.height
              << " cells)\n";
    return 0;
}

int cmd_render(const std::string& run_dir) {
    const ScenarioConfig sc = load_scenario((fs::path(run_dir) / "scenario.json").string());
    ManifestWriter manifest(run_dir, "render");
    manifest.set_scenario_hash(scenario_hash(sc));

    World world;
    world.scenario = sc;
    world.dem = load_dem((fs::path(run_dir) / "scene.demr").string());
    world.grads = gradient_field(world.dem);
    const auto t0 = Clock::now();
    world.poses = generate_trajectory(sc, world.dem);
    manifest.stage("trajectory", ms_since(t0));

    const fs::path frames_dir = fs::path(run_dir) / "frames";
    fs::create_directories(frames_dir);
    const auto t1 = Clock::now();
    const int n = int(world.poses.size());
    parallel_for(n, [&](int k) {
        const RasterImage img = render_frame(world, k);
        save_image(img, (frames_dir / frame_filename(k)).string());
    });
    manifest.stage("render_frames", ms_since(t1));

    const auto t2 = Clock::now();
    save_tum((fs::path(run_dir) / "gt.tum").string(), world.poses);
    write_planned_csv((fs::path(run_dir) / "planned.csv").string(),
                      make_planned_path(world));
    const GroundTruth gt = make_ground_truth(world);
    {
        std::ofstream f(fs::path(run_dir) / "anchors.csv", std::ios::trunc);
        f << "frame_id,anchor_id,u,v,x,y,z\n";
        f.precision(12);
        for (const auto& fr : gt.frames)
            for (size_t i = 0; i < fr.anchor_ids.size(); ++i) {
                const auto& a = gt.anchors[size_t(fr.anchor_ids[i])];
                f << fr.frame_id << "," << fr.anchor_ids[i] << "," << fr.anchor_px[i].x()
                  << "," << fr.anchor_px[i].y() << "," << a.x() << "," << a.y() << ","
                  << a.z() << "\n";
            }
    }
    manifest.stage("ground_truth", ms_since(t2));

    manifest.output("gt.tum");
    manifest.output("planned.csv");
    manifest.output("anchors.csv");
    manifest.output((fs::path("frames") / frame_filename(0)).string());
    manifest.output((fs::path("frames") / frame_filename(n - 1)).string());
    manifest.write();
    std::cout << n << " frames rendered into " << (frames_dir).string() << "\n";
    return 0;
}

int cmd_match(const std::string& target_path, const std::string& ref_path,
              const std::string& windowing, const std::string& json_out) {
    const RasterImage target = load_image(target_path);
    const RasterImage reference = load_image(ref_path);
    MatchOptions opts;
    opts.windowing = windowing == "none" ? Windowing::none : Windowing::hann;
    const MatchResult m = match_translation(target, reference, opts);
    json j;
    j["dx"] = m.dx;
    j["dy"] = m.dy;
    j["peak"] = m.peak;
    j["integer_dx"] = m.integer_dx;
    j["integer_dy"] = m.integer_dy;
    j["low_confidence"] = m.low_confidence;
    const std::string text = j.dump(2);
    if (!json_out.empty()) {
        std::ofstream f(json_out, std::ios::trunc);
        f << text << "\n";
    }
    std::cout << text << "\n";
    return 0;
}

int cmd_decompose(const std::string& target_path, const std::string& ref_path,
                  double azimuth_deg, double elevation_deg, const std::string& windowing,
                  const std::string& json_out) {
    const RasterImage target = load_image(target_path);
    const RasterImage reference = load_image(ref_path);
    const Windowing w = windowing == "none" ? Windowing::none : Windowing::hann;
    const Spectrum ft = forward_spectrum(target, w);
    const Spectrum fr = forward_spectrum(reference, w);
    const CrossPowerSpectrum q = cross_power_spectrum(fr, ft);
    IlluminationConfig illum;
    illum.azimuth = azimuth_deg * kDeg;
    illum.elevation = elevation_deg * kDeg;
    const DecompositionReport rep = decompose_spectrum(q, illum);
    json j;
    j["sign_agreement"] = rep.sign_agreement;
    j["fringe_density"] = rep.fringe_density;
    j["fringe_orientation"] = rep.fringe_orientation;
    j["peak_attenuation"] = rep.peak_attenuation;
    const std::string text = j.dump(2);
    if (!json_out.empty()) {
        std::ofstream f(json_out, std::ios::trunc);
        f << text << "\n";
    }
    std::cout << text << "\n";
    return 0;
}

int cmd_georef(const std::string& run_dir, int stride, double min_peak) {
    const ScenarioConfig sc = load_scenario((fs::path(run_dir) / "scenario.json").string());
    ManifestWriter manifest(run_dir, "georef");
    manifest.set_scenario_hash(scenario_hash(sc));
    const DemGrid dem = load_dem((fs::path(run_dir) / "scene.demr").string());
    const PlannedPath planned =
        read_planned_csv((fs::path(run_dir) / "planned.csv").string());

    std::vector<RasterImage> frames;
    std::vector<KeyframeImage> kfs;
    for (size_t k = 0; k < planned.entries.size(); k += size_t(stride)) {
        const fs::path p = fs::path(run_dir) / "frames" / frame_filename(int(k));
        if (!fs::exists(p)) break;
        frames.push_back(load_image(p.string()));
        kfs.push_back({int(k), planned.entries[k].t, nullptr});
    }
    for (size_t i = 0; i < kfs.size(); ++i) kfs[i].frame = &frames[i];
    if (kfs.empty()) throw std::runtime_error("georef: no frames found in " + run_dir);

    GeorefOptions opts;
    opts.match.min_peak = min_peak;
    const auto t0 = Clock::now();
    const std::vector<GeoFix> fixes =
        georeference_sequence(kfs, planned, dem, sc.camera, sc.presumed_illumination, opts);
    manifest.stage("georeference", ms_since(t0));

    write_fixes_csv((fs::path(run_dir) / "fixes.csv").string(), fixes);
    manifest.output("fixes.csv");
    manifest.write();
    int accepted = 0;
    for (const auto& f : fixes) accepted += f.accepted ? 1 : 0;
    std::cout << fixes.size() << " fixes (" << accepted << " accepted) -> fixes.csv\n";
    return 0;
}

int cmd_slam(const std::string& run_dir, double w_geo, int window, double min_peak,
             double inject_drift, bool similarity, bool no_gt_bootstrap) {
    const ScenarioConfig sc = load_scenario((fs::path(run_dir) / "scenario.json").string());
    ManifestWriter manifest(run_dir, "slam");
    manifest.set_scenario_hash(scenario_hash(sc));
    const DemGrid dem = load_dem((fs::path(run_dir) / "scene.demr").string());
    const PlannedPath planned =
        read_planned_csv((fs::path(run_dir) / "planned.csv").string());

    std::vector<double> stamps;
    for (const auto& e : planned.entries) stamps.push_back(e.t);
    DirectoryFrameProvider frames((fs::path(run_dir) / "frames").string(), stamps);

    std::vector<StampedPose> gt;
    const fs::path gt_path = fs::path(run_dir) / "gt.tum";
    if (fs::exists(gt_path)) gt = load_tum(gt_path.string());

    PipelineOptions opts;
    opts.w_geo = w_geo;
    opts.window_size = window;
    opts.georef.match.min_peak = min_peak;
    opts.inject_drift = inject_drift;
    opts.drift_seed = sc.seed;
    opts.similarity_alignment = similarity;

    const auto t0 = Clock::now();
    const SlamResult result =
        run_slam(dem, planned, frames, sc.camera, sc.presumed_illumination, opts,
                 (!no_gt_bootstrap && gt.size() >= 2) ? &gt : nullptr);
    manifest.stage("slam", ms_since(t0));

    save_tum((fs::path(run_dir) / "fused.tum").string(), result.fused);
    save_tum((fs::path(run_dir) / "vo_only.tum").string(), result.vo_only);
    write_fixes_csv((fs::path(run_dir) / "fixes.csv").string(), result.fixes);

    json rep;
    rep["frames"] = result.report.frames;
    rep["keyframes"] = result.report.keyframes;
    rep["fixes_total"] = result.report.fixes_total;
    rep["fixes_accepted"] = result.report.fixes_accepted;
    rep["mean_lba_iters"] = result.report.mean_lba_iters;
    rep["track_ms"] = result.report.track_ms;
    rep["georef_ms"] = result.report.georef_ms;
    rep["lba_ms"] = result.report.lba_ms;
    rep["wall_time_per_frame_ms"] = result.report.wall_time_per_frame_ms;
    rep["processing_fps"] = result.report.processing_fps;
    rep["aligned"] = result.report.aligned;
    rep["vo_lost"] = result.report.vo_lost;
    rep["w_geo"] = w_geo;
    if (!gt.empty()) {
        const Trajectory gt_traj = trajectory_from_poses(gt, "world");
        try {
            const ApeStats fused = ape(trajectory_from_poses(result.fused, "world"), gt_traj);
            rep["ape_fused_rmse"] = fused.rmse;
            rep["ape_fused_mean"] = fused.mean;
            ApeOptions vo_opts;
            vo_opts.align_first = true;
            const ApeStats vo =
                ape(trajectory_from_poses(result.vo_only, "vo"), gt_traj, vo_opts);
            rep["ape_vo_only_rmse"] = vo.rmse;
            rep["ape_vo_only_mean"] = vo.mean;
        } catch (const std::exception& e) {
            rep["ape_error"] = e.what();
        }
    }
    {
        std::ofstream f(fs::path(run_dir) / "report.json", std::ios::trunc);
        f << rep.dump(2) << "\n";
    }

    manifest.output("fused.tum");
    manifest.output("vo_only.tum");
    manifest.output("fixes.csv");
    manifest.output("report.json");
    manifest.write();
    std::cout << rep.dump(2) << "\n";
    return 0;
}

int cmd_sweep(const std::string& scenario_path, const std::string& axis_name,
              std::vector<double> values, const std::string& out_dir, int stride) {
    ScenarioConfig base = load_scenario(scenario_path);
    base.plan_perturbation = 0.0;  // measure pure matching error against truth
    SweepAxis axis;
    if (axis_name == "intensity")
        axis = SweepAxis::intensity;
    else if (axis_name == "azimuth")
        axis = SweepAxis::azimuth;
    else if (axis_name == "elevation")
        axis = SweepAxis::elevation;
    else
        throw std::runtime_error("sweep: unknown axis '" + axis_name +
                                 "' (intensity|azimuth|elevation)");

    fs::create_directories(out_dir);
    ManifestWriter manifest(out_dir, "sweep");
    manifest.set_scenario_hash(scenario_hash(base));
    const auto scenarios = illumination_sweep(base, axis, values);

    std::ofstream csv(fs::path(out_dir) / "sweep.csv", std::ios::trunc);
    csv << "value,mean_px_err,max_px_err,mean_georef_err_m\n";
    csv.precision(10);

    PlotSeries px_series, geo_series;
    px_series.label = "mean px error";
    px_series.color = "#1f6fb2";
    geo_series.label = "mean georef error (m)";
    geo_series.color = "#b23c1f";

    const auto t0 = Clock::now();
    for (size_t vi = 0; vi < scenarios.size(); ++vi) {
        const World world = prepare_world(scenarios[vi]);
        const GeorefOptions gopts;
        double px_sum = 0, px_max = 0, geo_sum = 0;
        int count = 0;
        for (int k = 0; k < int(world.poses.size()); k += stride) {
            const RasterImage frame = render_frame(world, k);
            const Eigen::Vector3d truth = world.poses[size_t(k)].pose.translation;
            PlannedPathEntry entry;
            entry.t = world.poses[size_t(k)].t;
            entry.x = truth.x();
            entry.y = truth.y();
            entry.z = truth.z();
            const double h = entry.z - bilinear_sample(world.dem, entry.x, entry.y);
            const GeoFix fix = georeference(frame, entry, world.dem, world.grads,
                                            scenarios[vi].camera,
                                            scenarios[vi].presumed_illumination, h, gopts, k);
            const double px_err = std::hypot((fix.position.x() - truth.x()) / fix.gsd,
                                             (fix.position.y() - truth.y()) / fix.gsd);
            const double geo_err = (fix.position.head<2>() - truth.head<2>()).norm();
            px_sum += px_err;
            px_max = std::max(px_max, px_err);
            geo_sum += geo_err;
            ++count;
        }
        const double v = values[vi];
        const double mean_px = px_sum / std::max(1, count);
        const double mean_geo = geo_sum / std::max(1, count);
        csv << v << "," << mean_px << "," << px_max << "," << mean_geo << "\n";
        px_series.x.push_back(v);
        px_series.y.push_back(mean_px);
        geo_series.x.push_back(v);
        geo_series.y.push_back(mean_geo);
    }
    csv.close();
    manifest.stage("sweep", ms_since(t0));

    write_svg_chart((fs::path(out_dir) / "sweep.svg").string(),
                    "Matching error vs " + axis_name, axis_name, "error",
                    {px_series, geo_series});
    manifest.output("sweep.csv");
    manifest.output("sweep.svg");
    manifest.write();
    std::cout << "sweep written to " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path, bool align,
             bool as_json, double tol) {
    ApeOptions opts;
    opts.associate_tol = tol;
    opts.align_first = align;
    const ApeStats s =
        ape(trajectory_from_tum(est_path, "est"), trajectory_from_tum(gt_path, "gt"), opts);
    if (as_json) {
        json j;
        j["max"] = s.max;
        j["median"] = s.median;
        j["min"] = s.min;
        j["mean"] = s.mean;
        j["rmse"] = s.rmse;
        j["std"] = s.std;
        j["count"] = s.count;
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "max,median,min,mean,rmse,std\n" << ape_csv_row(s) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"terranav: terrain-aided UAV localization toolkit"};
    app.set_version_flag("--version", std::string("terranav ") + kVersion);
    app.require_subcommand(1);

    // gen-scene
    std::string scenario_path, out_dir;
    auto* gen = app.add_subcommand("gen-scene", "generate a seeded scene into a run directory");
    gen->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    gen->add_option("--out", out_dir, "run directory")->required();

    // render
    std::string run_dir;
    auto* render = app.add_subcommand("render", "render the frame sequence of a run directory");
    render->add_option("--run", run_dir, "run directory (after gen-scene)")->required();

    // match
    std::string target_path, ref_path, windowing = "hann", json_out;
    auto* match = app.add_subcommand("match", "phase-correlation match of two rasters");
    match->add_option("target", target_path, "target raster (.demr)")->required();
    match->add_option("reference", ref_path, "reference raster (.demr)")->required();
    match->add_option("--window", windowing, "windowing: hann|none")->default_val("hann");
    match->add_option("--json-out", json_out, "also write the JSON record here");

    // decompose
    double azimuth_deg = 0.0, elevation_deg = 45.0;
    auto* dec = app.add_subcommand("decompose", "spectral decomposition diagnostics");
    dec->add_option("target", target_path, "target raster (.demr)")->required();
    dec->add_option("reference", ref_path, "reference raster (.demr)")->required();
    dec->add_option("--azimuth-deg", azimuth_deg, "illumination azimuth")->required();
    dec->add_option("--elevation-deg", elevation_deg, "illumination elevation")->required();
    dec->add_option("--window", windowing, "windowing: hann|none")->default_val("hann");
    dec->add_option("--json-out", json_out, "also write the JSON report here");

    // georef
    int stride = 21;
    double min_peak = 0.05;
    auto* geo = app.add_subcommand("georef", "geo-reference frames against the DEM");
    geo->add_option("--run", run_dir, "run directory (after render)")->required();
    geo->add_option("--stride", stride, "frame stride")->default_val(21);
    geo->add_option("--min-peak", min_peak, "acceptance threshold")->default_val(0.05);

    // slam
    double w_geo = 10.0, inject_drift = 0.0;
    int window = 15;
    bool similarity = false, no_gt_bootstrap = false;
    auto* slam = app.add_subcommand("slam", "full pipeline: VO + georef + fused LBA");
    slam->add_option("--run", run_dir, "run directory (after render)")->required();
    slam->add_option("--w-geo", w_geo, "geo-residual confidence")->default_val(10.0);
    slam->add_option("--window", window, "LBA window size (keyframes)")->default_val(15);
    slam->add_option("--min-peak", min_peak, "fix acceptance threshold")->default_val(0.05);
    slam->add_option("--inject-drift", inject_drift,
                     "meters/frame of injected VO drift (fusion experiments)");
    slam->add_flag("--similarity", similarity, "7-DOF trajectory alignment");
    slam->add_flag("--no-gt-bootstrap", no_gt_bootstrap,
                   "bootstrap from the essential matrix even when gt.tum exists");

    // sweep
    std::string axis_name;
    std::vector<double> values;
    auto* sweep = app.add_subcommand("sweep", "illumination sweep of matching accuracy");
    sweep->add_option("--scenario", scenario_path, "base scenario JSON")->required();
    sweep->add_option("--axis", axis_name, "intensity|azimuth|elevation")->required();
    sweep->add_option("--values", values, "swept values (deg for angles)")
        ->required()
        ->delimiter(',');
    sweep->add_option("--out", out_dir, "output directory")->required();
    sweep->add_option("--stride", stride, "frame stride per value")->default_val(25);

    // eval
    std::string est_path, gt_path;
    bool align = false, as_json = false;
    double tol = 0.05;
    auto* eval = app.add_subcommand("eval", "APE statistics of a trajectory vs ground truth");
    eval->add_option("estimate", est_path, "estimated trajectory (TUM)")->required();
    eval->add_option("ground_truth", gt_path, "ground-truth trajectory (TUM)")->required();
    eval->add_flag("--align", align, "rigid pre-alignment (VO-only baselines)");
    eval->add_flag("--json", as_json, "JSON output instead of CSV");
    eval->add_option("--tol", tol, "association tolerance, seconds")->default_val(0.05);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_scene(scenario_path, out_dir);
        if (render->parsed()) return cmd_render(run_dir);
        if (match->parsed()) return cmd_match(target_path, ref_path, windowing, json_out);
        if (dec->parsed())
            return cmd_decompose(target_path, ref_path, azimuth_deg, elevation_deg,
                                 windowing, json_out);
        if (geo->parsed()) return cmd_georef(run_dir, stride, min_peak);
        if (slam->parsed())
            return cmd_slam(run_dir, w_geo, window, min_peak, inject_drift, similarity,
                            no_gt_bootstrap);
        if (sweep->parsed()) return cmd_sweep(scenario_path, axis_name, values, out_dir, stride);
        if (eval->parsed()) return cmd_eval(est_path, gt_path, align, as_json, tol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
