#pragma once

#include <string>
#include <vector>

// Raster types and file I/O.
//
// Conventions used throughout the project:
//  - World frame: x east, y north, z up (meters).
//  - DemGrid is a world-space raster: cell (ix, iy) has its center at
//    (origin_x + ix * cell_size, origin_y + iy * cell_size), i.e. the row
//    index grows northward. Storage is row-major, index = iy * width + ix.
//  - RasterImage is a camera-space raster (optical frame or terrain chip):
//    column u grows east, row v grows SOUTH (v = 0 is the north edge), the
//    usual top-down image layout. Index = v * width + u.
//  - Values are computed in double precision; the on-disk container stores
//    little-endian 32-bit floats.

namespace terranav {

struct DemGrid {
    int width = 0;   // cells
    int height = 0;  // cells
    double cell_size = 1.0;  // meters/cell
    double origin_x = 0.0;   // world x of cell (0,0) center, meters
    double origin_y = 0.0;   // world y of cell (0,0) center, meters
    std::vector<double> elevations;  // row-major, meters

    double at(int ix, int iy) const { return elevations[size_t(iy) * width + ix]; }
    double& at(int ix, int iy) { return elevations[size_t(iy) * width + ix]; }

    // Extent of valid bilinear queries: the hull of cell centers.
    double min_x() const { return origin_x; }
    double min_y() const { return origin_y; }
    double max_x() const { return origin_x + (width - 1) * cell_size; }
    double max_y() const { return origin_y + (height - 1) * cell_size; }

    // Throws std::invalid_argument when an invariant is violated.
    void validate() const;
};

struct GradientField {
    int width = 0;
    int height = 0;
    std::vector<double> p;  // dV/dx (east), dimensionless slope
    std::vector<double> q;  // dV/dy (north), dimensionless slope

    double p_at(int ix, int iy) const { return p[size_t(iy) * width + ix]; }
    double q_at(int ix, int iy) const { return q[size_t(iy) * width + ix]; }
};

struct RasterImage {
    int width = 0;   // pixels
    int height = 0;  // pixels
    std::vector<double> pixels;  // row-major intensities, >= 0

    double at(int u, int v) const { return pixels[size_t(v) * width + u]; }
    double& at(int u, int v) { return pixels[size_t(v) * width + u]; }

    void validate() const;
};

// --- File container -------------------------------------------------------
//
// `<name>.demr` holds the payload (row-major little-endian float32);
// `<name>.demr.json` is the sidecar with width/height/cell_size_m/
// origin_x_m/origin_y_m/kind. kind is "dem" or "image".

void save_dem(const DemGrid& grid, const std::string& path);
DemGrid load_dem(const std::string& path);

void save_image(const RasterImage& img, const std::string& path);
RasterImage load_image(const std::string& path);

// --- Operations ------------------------------------------------------------

// Central differences in the interior, one-sided at the borders, divided by
// cell_size so values are slope (rise over horizontal run).
GradientField gradient_field(const DemGrid& grid);

// Bilinear interpolation of the four surrounding cell centers.
// Throws std::invalid_argument when (x, y) falls outside the extent.
double bilinear_sample(const DemGrid& grid, double x, double y);

// Continuous gradient lookup: bilinear interpolation of the gradient rasters
// at a world point. Used by the shading-based renderers.
void bilinear_gradient(const DemGrid& grid, const GradientField& g,
                       double x, double y, double& p_out, double& q_out);

// size x size sub-grid whose window is centered (to the nearest cell) on the
// world point (center_x, center_y). Throws when the window leaves the grid.
DemGrid crop_window(const DemGrid& grid, double center_x, double center_y, int size);

// Reinterpret a DEM as a camera-oriented image (row 0 = north edge) with
// elevations as intensities, shifted so the minimum maps to zero.
RasterImage image_from_dem(const DemGrid& grid);

}  // namespace terranav
