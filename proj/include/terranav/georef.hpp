#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "terranav/hillshade.hpp"
#include "terranav/phasecorr.hpp"
#include "terranav/raster.hpp"

// Absolute localization of keyframes: a terrain-shaded reference chip is
// rendered from the DEM at the planned position under the presumed
// illumination, the camera frame is matched against it by phase correlation,
// and the pixel offset converts to world coordinates at the chip's GSD:
//
//   X_T = X_R + GSD * dX      (dX = PC offset along the east pixel axis)
//   Y_T = Y_R + GSD * dY      (dY = northward pixel offset = -dy of the
//                              raw match; image rows grow south)
//   Z_T = DEM(X_R, Y_R) + H
//
// H is the presumed height above ground supplied by the caller.

namespace terranav {

struct PlannedPathEntry {
    double t = 0.0;  // seconds
    double x = 0.0;  // world meters
    double y = 0.0;
    double z = 0.0;  // absolute altitude, meters
};

struct PlannedPath {
    std::vector<PlannedPathEntry> entries;

    // Throws when empty or timestamps are not strictly increasing.
    void validate() const;
    const PlannedPathEntry& nearest(double t) const;
};

struct GeoFix {
    int keyframe_id = 0;
    double t = 0.0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // (X_T, Y_T, Z_T)
    double gsd = 0.0;   // meters/pixel of the reference chip
    double peak = 0.0;  // PC confidence in [0, 1]
    bool accepted = false;
};

struct GeorefOptions {
    MatchOptions match;  // windowing, eps, min_peak
};

// Terrain-shaded reference chip at the camera's pixel grid, plus its GSD.
std::pair<RasterImage, double> make_reference_chip(const DemGrid& dem,
                                                   const PlannedPathEntry& entry,
                                                   const CameraModel& camera,
                                                   const IlluminationConfig& presumed_illum);
// Variant with precomputed DEM gradients for batched calls.
std::pair<RasterImage, double> make_reference_chip(const DemGrid& dem,
                                                   const GradientField& grads,
                                                   const PlannedPathEntry& entry,
                                                   const CameraModel& camera,
                                                   const IlluminationConfig& presumed_illum);

GeoFix georeference(const RasterImage& frame, const PlannedPathEntry& entry,
                    const DemGrid& dem, const CameraModel& camera,
                    const IlluminationConfig& presumed_illum, double flight_height,
                    const GeorefOptions& opts = {}, int keyframe_id = 0);
GeoFix georeference(const RasterImage& frame, const PlannedPathEntry& entry,
                    const DemGrid& dem, const GradientField& grads,
                    const CameraModel& camera, const IlluminationConfig& presumed_illum,
                    double flight_height, const GeorefOptions& opts = {},
                    int keyframe_id = 0);

// One fix per keyframe, associated with the nearest planned-path entry by
// timestamp. The height above ground is derived per entry as
// entry.z - DEM(entry.x, entry.y). Throws on an empty keyframe list or path.
struct KeyframeImage {
    int keyframe_id = 0;
    double t = 0.0;
    const RasterImage* frame = nullptr;
};
std::vector<GeoFix> georeference_sequence(const std::vector<KeyframeImage>& keyframes,
                                          const PlannedPath& planned, const DemGrid& dem,
                                          const CameraModel& camera,
                                          const IlluminationConfig& presumed_illum,
                                          const GeorefOptions& opts = {});

}  // namespace terranav
