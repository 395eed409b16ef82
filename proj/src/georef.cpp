#include "terranav/georef.hpp"

#include <cmath>
#include <stdexcept>

namespace terranav {

void PlannedPath::validate() const {
    if (entries.empty())
        throw std::invalid_argument("PlannedPath: empty path");
    for (size_t i = 1; i < entries.size(); ++i)
        if (!(entries[i].t > entries[i - 1].t))
            throw std::invalid_argument("PlannedPath: timestamps must be strictly increasing");
}

const PlannedPathEntry& PlannedPath::nearest(double t) const {
    if (entries.empty())
        throw std::invalid_argument("PlannedPath: empty path");
    size_t best = 0;
    double best_dt = std::abs(entries[0].t - t);
    for (size_t i = 1; i < entries.size(); ++i) {
        const double dt = std::abs(entries[i].t - t);
        if (dt < best_dt) {
            best_dt = dt;
            best = i;
        }
    }
    return entries[best];
}

std::pair<RasterImage, double> make_reference_chip(const DemGrid& dem,
                                                   const GradientField& grads,
                                                   const PlannedPathEntry& entry,
                                                   const CameraModel& camera,
                                                   const IlluminationConfig& presumed_illum) {
    presumed_illum.validate();
    const FootprintInfo fp = footprint_and_gsd(dem, entry.x, entry.y, entry.z, camera);

    RasterImage chip;
    chip.width = camera.image_width;
    chip.height = camera.image_height;
    chip.pixels.resize(size_t(chip.width) * chip.height);
    const double cx = camera.cx(), cy = camera.cy();
    for (int v = 0; v < chip.height; ++v) {
        const double y = entry.y - (v - cy) * fp.gsd;  // rows grow south
        for (int u = 0; u < chip.width; ++u) {
            const double x = entry.x + (u - cx) * fp.gsd;
            chip.at(u, v) = shade_at(dem, grads, presumed_illum, x, y, 1.0, true);
        }
    }
    return {std::move(chip), fp.gsd};
}

std::pair<RasterImage, double> make_reference_chip(const DemGrid& dem,
                                                   const PlannedPathEntry& entry,
                                                   const CameraModel& camera,
                                                   const IlluminationConfig& presumed_illum) {
    const GradientField grads = gradient_field(dem);
    return make_reference_chip(dem, grads, entry, camera, presumed_illum);
}

GeoFix georeference(const RasterImage& frame, const PlannedPathEntry& entry,
                    const DemGrid& dem, const CameraModel& camera,
                    const IlluminationConfig& presumed_illum, double flight_height,
                    const GeorefOptions& opts, int keyframe_id) {
    const GradientField grads = gradient_field(dem);
    return georeference(frame, entry, dem, grads, camera, presumed_illum, flight_height,
                        opts, keyframe_id);
}

GeoFix georeference(const RasterImage& frame, const PlannedPathEntry& entry,
                    const DemGrid& dem, const GradientField& grads,
                    const CameraModel& camera, const IlluminationConfig& presumed_illum,
                    double flight_height, const GeorefOptions& opts, int keyframe_id) {
    if (frame.width != camera.image_width || frame.height != camera.image_height)
        throw std::invalid_argument("georeference: frame does not match the camera model");
    auto [chip, gsd] = make_reference_chip(dem, grads, entry, camera, presumed_illum);
    const MatchResult m = match_translation(frame, chip, opts.match);

    GeoFix fix;
    fix.keyframe_id = keyframe_id;
    fix.t = entry.t;
    fix.position.x() = entry.x + gsd * m.dx;
    fix.position.y() = entry.y - gsd * m.dy;  // north-positive
    fix.position.z() = bilinear_sample(dem, entry.x, entry.y) + flight_height;
    fix.gsd = gsd;
    fix.peak = m.peak;
    fix.accepted = !m.low_confidence;
    return fix;
}

std::vector<GeoFix> georeference_sequence(const std::vector<KeyframeImage>& keyframes,
                                          const PlannedPath& planned, const DemGrid& dem,
                                          const CameraModel& camera,
                                          const IlluminationConfig& presumed_illum,
                                          const GeorefOptions& opts) {
    if (keyframes.empty())
        throw std::invalid_argument("georeference_sequence: empty keyframe list");
    planned.validate();
    const GradientField grads = gradient_field(dem);
    std::vector<GeoFix> out;
    out.reserve(keyframes.size());
    for (const auto& kf : keyframes) {
        if (!kf.frame)
            throw std::invalid_argument("georeference_sequence: null frame");
        const PlannedPathEntry& entry = planned.nearest(kf.t);
        const double h = entry.z - bilinear_sample(dem, entry.x, entry.y);
        GeoFix fix = georeference(*kf.frame, entry, dem, grads, camera, presumed_illum, h,
                                  opts, kf.keyframe_id);
        fix.t = kf.t;
        out.push_back(fix);
    }
    return out;
}

}  // namespace terranav
