#pragma once

#include "terranav/raster.hpp"

// Lambertian terrain shading, camera footprint geometry and ground sample
// distance. Shading follows the local reflectance model
//
//   I = L * (p cos(tau) cos(sigma) + q sin(tau) cos(sigma) + sin(sigma))
//         / sqrt(p^2 + q^2 + 1) * r
//
// with azimuth tau measured from east (+x) toward north (+y) and elevation
// sigma above the horizon. Facets facing away from the sun produce negative
// values and are clamped to zero unless clamping is disabled.

namespace terranav {

struct IlluminationConfig {
    double intensity = 1.0;  // L, dimensionless radiance scale, >= 0
    double azimuth = 0.0;    // tau, radians in [-pi, pi]
    double elevation = 1.0;  // sigma, radians in (0, pi/2]

    void validate() const;
};

struct ShadingParams {
    double reflectance = 1.0;            // constant r when per_cell is empty
    std::vector<double> per_cell;        // optional per-cell r, row-major, grid dims
    bool clamp_negative = true;          // clamp self-shadowed facets to 0

    void validate(size_t grid_cells) const;
};

struct CameraModel {
    double focal_length_mm = 36.0;
    double sensor_size_mm = 36.0;  // size along the larger image dimension
    int image_width = 480;         // pixels
    int image_height = 480;        // pixels

    // Half field of view across the larger image dimension.
    double half_fov() const;
    // Focal length in pixels (square pixels, pitch = sensor / max(w, h)).
    double focal_px() const;
    double cx() const { return 0.5 * (image_width - 1); }
    double cy() const { return 0.5 * (image_height - 1); }

    void validate() const;
};

// Per-cell shaded relief of the whole grid, returned in image orientation
// (row 0 = north edge).
RasterImage shade(const DemGrid& grid, const IlluminationConfig& illum,
                  const ShadingParams& params);

// Pointwise shading at an arbitrary world position using bilinear gradients.
// Used by the chip generator and the renderer. `reflectance` is the local r.
double shade_at(const DemGrid& grid, const GradientField& grads,
                const IlluminationConfig& illum, double x, double y,
                double reflectance, bool clamp_negative);

// Shade value for explicit gradients (no grid lookup).
double shade_value(double p, double q, const IlluminationConfig& illum,
                   double reflectance, bool clamp_negative);

// s = max(w, h), the image size entering the GSD formula.
int compute_s(const CameraModel& camera);

// GSD = 2 (z_ref - h_min) tan(theta) / s, meters per pixel.
// Throws when z_ref <= h_min (degenerate altitude).
double compute_gsd(const CameraModel& camera, double z_ref, double h_min);

// Minimum elevation over all cells intersecting the square footprint of
// half-width `footprint_half_width` centered at (center_x, center_y).
double footprint_min_elevation(const DemGrid& grid, double center_x,
                               double center_y, double footprint_half_width);

// Footprint and GSD of a nadir camera at altitude z over (x, y): resolves the
// mutual dependence between footprint size and the minimum elevation inside
// it by iterating the footprint estimate twice.
struct FootprintInfo {
    double h_min = 0.0;      // lowest terrain in the field of view, meters
    double gsd = 0.0;        // meters per pixel
    double half_width = 0.0; // footprint half-width, meters
};
FootprintInfo footprint_and_gsd(const DemGrid& grid, double x, double y,
                                double z, const CameraModel& camera);

}  // namespace terranav
