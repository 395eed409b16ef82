#include "terranav/hillshade.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace terranav {

void IlluminationConfig::validate() const {
    if (!(intensity >= 0.0) || !std::isfinite(intensity))
        throw std::invalid_argument("IlluminationConfig: intensity must be >= 0");
    if (!(azimuth >= -std::numbers::pi && azimuth <= std::numbers::pi))
        throw std::invalid_argument("IlluminationConfig: azimuth outside [-pi, pi]");
    if (!(elevation > 0.0 && elevation <= 0.5 * std::numbers::pi))
        throw std::invalid_argument("IlluminationConfig: elevation outside (0, pi/2]");
}

void ShadingParams::validate(size_t grid_cells) const {
    if (per_cell.empty()) {
        if (!(reflectance >= 0.0 && reflectance <= 1.0))
            throw std::invalid_argument("ShadingParams: reflectance outside [0, 1]");
        return;
    }
    if (per_cell.size() != grid_cells)
        throw std::invalid_argument("ShadingParams: per-cell reflectance size mismatch");
    for (double r : per_cell)
        if (!(r >= 0.0 && r <= 1.0))
            throw std::invalid_argument("ShadingParams: reflectance outside [0, 1]");
}

double CameraModel::half_fov() const {
    return std::atan(sensor_size_mm / (2.0 * focal_length_mm));
}

double CameraModel::focal_px() const {
    const int s = std::max(image_width, image_height);
    return focal_length_mm * double(s) / sensor_size_mm;
}

void CameraModel::validate() const {
    if (!(focal_length_mm > 0.0) || !(sensor_size_mm > 0.0))
        throw std::invalid_argument("CameraModel: focal length and sensor size must be > 0");
    if (image_width < 16 || image_height < 16)
        throw std::invalid_argument("CameraModel: image dimensions must be >= 16 px");
    const double th = half_fov();
    if (!(th > 0.0 && th < 0.5 * std::numbers::pi))
        throw std::invalid_argument("CameraModel: half fov outside (0, pi/2)");
}

double shade_value(double p, double q, const IlluminationConfig& illum,
                   double reflectance, bool clamp_negative) {
    const double ct = std::cos(illum.azimuth);
    const double st = std::sin(illum.azimuth);
    const double cs = std::cos(illum.elevation);
    const double ss = std::sin(illum.elevation);
    const double num = p * ct * cs + q * st * cs + ss;
    double v = illum.intensity * num / std::sqrt(p * p + q * q + 1.0) * reflectance;
    if (clamp_negative && v < 0.0) v = 0.0;
    return v;
}

RasterImage shade(const DemGrid& grid, const IlluminationConfig& illum,
                  const ShadingParams& params) {
    grid.validate();
    illum.validate();
    params.validate(grid.elevations.size());
    const GradientField g = gradient_field(grid);
    RasterImage img;
    img.width = grid.width;
    img.height = grid.height;
    img.pixels.resize(grid.elevations.size());
    for (int v = 0; v < grid.height; ++v) {
        const int iy = grid.height - 1 - v;  // image row 0 = north edge
        for (int u = 0; u < grid.width; ++u) {
            const double r = params.per_cell.empty()
                                 ? params.reflectance
                                 : params.per_cell[size_t(iy) * grid.width + u];
            img.at(u, v) = shade_value(g.p_at(u, iy), g.q_at(u, iy), illum, r,
                                       params.clamp_negative);
        }
    }
    return img;
}

double shade_at(const DemGrid& grid, const GradientField& grads,
                const IlluminationConfig& illum, double x, double y,
                double reflectance, bool clamp_negative) {
    double p, q;
    bilinear_gradient(grid, grads, x, y, p, q);
    return shade_value(p, q, illum, reflectance, clamp_negative);
}

int compute_s(const CameraModel& camera) {
    camera.validate();
    return std::max(camera.image_width, camera.image_height);
}

double compute_gsd(const CameraModel& camera, double z_ref, double h_min) {
    camera.validate();
    if (!(z_ref > h_min))
        throw std::invalid_argument("compute_gsd: degenerate altitude (z_ref <= h_min)");
    return 2.0 * (z_ref - h_min) * std::tan(camera.half_fov()) / double(compute_s(camera));
}

double footprint_min_elevation(const DemGrid& grid, double center_x,
                               double center_y, double footprint_half_width) {
    grid.validate();
    if (!(footprint_half_width >= 0.0))
        throw std::invalid_argument("footprint_min_elevation: negative half width");
    if (center_x - footprint_half_width < grid.min_x() ||
        center_x + footprint_half_width > grid.max_x() ||
        center_y - footprint_half_width < grid.min_y() ||
        center_y + footprint_half_width > grid.max_y())
        throw std::invalid_argument("footprint_min_elevation: footprint outside grid extent");

    // All cells whose area intersects the square footprint.
    const double half_cell = 0.5 * grid.cell_size;
    int i0 = int(std::ceil((center_x - footprint_half_width - grid.origin_x - half_cell) / grid.cell_size));
    int i1 = int(std::floor((center_x + footprint_half_width - grid.origin_x + half_cell) / grid.cell_size));
    int j0 = int(std::ceil((center_y - footprint_half_width - grid.origin_y - half_cell) / grid.cell_size));
    int j1 = int(std::floor((center_y + footprint_half_width - grid.origin_y + half_cell) / grid.cell_size));
    i0 = std::max(i0, 0);
    j0 = std::max(j0, 0);
    i1 = std::min(i1, grid.width - 1);
    j1 = std::min(j1, grid.height - 1);
    double lo = grid.at(i0, j0);
    for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i)
            lo = std::min(lo, grid.at(i, j));
    return lo;
}

FootprintInfo footprint_and_gsd(const DemGrid& grid, double x, double y,
                                double z, const CameraModel& camera) {
    camera.validate();
    const double tan_th = std::tan(camera.half_fov());
    double ground = bilinear_sample(grid, x, y);
    if (!(z > ground))
        throw std::invalid_argument("footprint_and_gsd: camera at or below terrain");
    FootprintInfo info;
    info.h_min = ground;
    // Two passes: the footprint grows as lower terrain enters the view.
    for (int pass = 0; pass < 2; ++pass) {
        info.half_width = (z - info.h_min) * tan_th;
        info.h_min = footprint_min_elevation(grid, x, y, info.half_width);
    }
    info.gsd = compute_gsd(camera, z, info.h_min);
    info.half_width = (z - info.h_min) * tan_th;
    return info;
}

}  // namespace terranav
