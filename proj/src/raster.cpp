#include "terranav/raster.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little,
              "raster container I/O assumes a little-endian host");

namespace terranav {

using json = nlohmann::json;

void DemGrid::validate() const {
    if (width < 2 || height < 2)
        throw std::invalid_argument("DemGrid: width and height must be >= 2");
    if (!(cell_size > 0.0))
        throw std::invalid_argument("DemGrid: cell_size must be > 0");
    if (elevations.size() != size_t(width) * height)
        throw std::invalid_argument("DemGrid: elevation count does not match dimensions");
    for (double e : elevations)
        if (!std::isfinite(e))
            throw std::invalid_argument("DemGrid: non-finite elevation");
}

void RasterImage::validate() const {
    if (width < 1 || height < 1)
        throw std::invalid_argument("RasterImage: empty image");
    if (pixels.size() != size_t(width) * height)
        throw std::invalid_argument("RasterImage: pixel count does not match dimensions");
    for (double p : pixels)
        if (!std::isfinite(p) || p < 0.0)
            throw std::invalid_argument("RasterImage: pixels must be finite and >= 0");
}

namespace {

void write_payload(const std::string& path, const std::vector<double>& values) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot open for writing: " + path);
    std::vector<float> buf(values.size());
    for (size_t i = 0; i < values.size(); ++i) buf[i] = float(values[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            std::streamsize(buf.size() * sizeof(float)));
    if (!f)
        throw std::runtime_error("write failed: " + path);
}

std::vector<double> read_payload(const std::string& path, size_t expected) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f)
        throw std::runtime_error("missing file: " + path);
    const auto bytes = size_t(f.tellg());
    if (bytes != expected * sizeof(float))
        throw std::runtime_error("payload length mismatch: " + path + " holds " +
                                 std::to_string(bytes / sizeof(float)) + " values, header says " +
                                 std::to_string(expected));
    f.seekg(0);
    std::vector<float> buf(expected);
    f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(bytes));
    if (!f)
        throw std::runtime_error("read failed: " + path);
    std::vector<double> out(expected);
    for (size_t i = 0; i < expected; ++i) out[i] = double(buf[i]);
    return out;
}

void write_sidecar(const std::string& path, int w, int h, double cell, double ox,
                   double oy, const char* kind) {
    json j;
    j["width"] = w;
    j["height"] = h;
    j["cell_size_m"] = cell;
    j["origin_x_m"] = ox;
    j["origin_y_m"] = oy;
    j["kind"] = kind;
    std::ofstream f(path, std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
    if (!f)
        throw std::runtime_error("write failed: " + path);
}

json read_sidecar(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("missing sidecar: " + path);
    json j;
    f >> j;
    return j;
}

}  // namespace

void save_dem(const DemGrid& grid, const std::string& path) {
    grid.validate();
    write_sidecar(path + ".json", grid.width, grid.height, grid.cell_size,
                  grid.origin_x, grid.origin_y, "dem");
    write_payload(path, grid.elevations);
}

DemGrid load_dem(const std::string& path) {
    const json j = read_sidecar(path + ".json");
    DemGrid g;
    g.width = j.at("width").get<int>();
    g.height = j.at("height").get<int>();
    g.cell_size = j.at("cell_size_m").get<double>();
    g.origin_x = j.at("origin_x_m").get<double>();
    g.origin_y = j.at("origin_y_m").get<double>();
    if (g.width < 2 || g.height < 2 || !(g.cell_size > 0.0))
        throw std::runtime_error("invalid DEM header: " + path);
    g.elevations = read_payload(path, size_t(g.width) * g.height);
    g.validate();
    return g;
}

void save_image(const RasterImage& img, const std::string& path) {
    img.validate();
    write_sidecar(path + ".json", img.width, img.height, 1.0, 0.0, 0.0, "image");
    write_payload(path, img.pixels);
}

RasterImage load_image(const std::string& path) {
    const json j = read_sidecar(path + ".json");
    RasterImage img;
    img.width = j.at("width").get<int>();
    img.height = j.at("height").get<int>();
    if (img.width < 1 || img.height < 1)
        throw std::runtime_error("invalid image header: " + path);
    img.pixels = read_payload(path, size_t(img.width) * img.height);
    img.validate();
    return img;
}

GradientField gradient_field(const DemGrid& grid) {
    grid.validate();
    GradientField g;
    g.width = grid.width;
    g.height = grid.height;
    g.p.resize(grid.elevations.size());
    g.q.resize(grid.elevations.size());
    const double inv = 1.0 / grid.cell_size;
    for (int iy = 0; iy < grid.height; ++iy) {
        for (int ix = 0; ix < grid.width; ++ix) {
            double px;
            if (ix == 0)
                px = (grid.at(1, iy) - grid.at(0, iy)) * inv;
            else if (ix == grid.width - 1)
                px = (grid.at(ix, iy) - grid.at(ix - 1, iy)) * inv;
            else
                px = (grid.at(ix + 1, iy) - grid.at(ix - 1, iy)) * (0.5 * inv);
            double qy;
            if (iy == 0)
                qy = (grid.at(ix, 1) - grid.at(ix, 0)) * inv;
            else if (iy == grid.height - 1)
                qy = (grid.at(ix, iy) - grid.at(ix, iy - 1)) * inv;
            else
                qy = (grid.at(ix, iy + 1) - grid.at(ix, iy - 1)) * (0.5 * inv);
            g.p[size_t(iy) * grid.width + ix] = px;
            g.q[size_t(iy) * grid.width + ix] = qy;
        }
    }
    return g;
}

namespace {

// Shared bilinear kernel over a row-major field with DemGrid geometry.
double bilinear_field(const DemGrid& grid, const std::vector<double>& field,
                      double x, double y) {
    const double fx = (x - grid.origin_x) / grid.cell_size;
    const double fy = (y - grid.origin_y) / grid.cell_size;
    if (fx < 0.0 || fy < 0.0 || fx > grid.width - 1 || fy > grid.height - 1)
        throw std::invalid_argument("bilinear_sample: query outside grid extent");
    int ix = int(fx);
    int iy = int(fy);
    if (ix == grid.width - 1) --ix;    // allow queries exactly on the far edge
    if (iy == grid.height - 1) --iy;
    const double tx = fx - ix;
    const double ty = fy - iy;
    const double v00 = field[size_t(iy) * grid.width + ix];
    const double v10 = field[size_t(iy) * grid.width + ix + 1];
    const double v01 = field[size_t(iy + 1) * grid.width + ix];
    const double v11 = field[size_t(iy + 1) * grid.width + ix + 1];
    return (1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10 +
           (1 - tx) * ty * v01 + tx * ty * v11;
}

}  // namespace

double bilinear_sample(const DemGrid& grid, double x, double y) {
    return bilinear_field(grid, grid.elevations, x, y);
}

void bilinear_gradient(const DemGrid& grid, const GradientField& g, double x,
                       double y, double& p_out, double& q_out) {
    p_out = bilinear_field(grid, g.p, x, y);
    q_out = bilinear_field(grid, g.q, x, y);
}

DemGrid crop_window(const DemGrid& grid, double center_x, double center_y, int size) {
    if (size < 2)
        throw std::invalid_argument("crop_window: size must be >= 2");
    const long ic = std::lround((center_x - grid.origin_x) / grid.cell_size);
    const long jc = std::lround((center_y - grid.origin_y) / grid.cell_size);
    const long i0 = ic - size / 2;
    const long j0 = jc - size / 2;
    if (i0 < 0 || j0 < 0 || i0 + size > grid.width || j0 + size > grid.height)
        throw std::invalid_argument("crop_window: window exceeds grid extent");
    DemGrid out;
    out.width = size;
    out.height = size;
    out.cell_size = grid.cell_size;
    out.origin_x = grid.origin_x + double(i0) * grid.cell_size;
    out.origin_y = grid.origin_y + double(j0) * grid.cell_size;
    out.elevations.resize(size_t(size) * size);
    for (int j = 0; j < size; ++j)
        for (int i = 0; i < size; ++i)
            out.at(i, j) = grid.at(int(i0) + i, int(j0) + j);
    return out;
}

RasterImage image_from_dem(const DemGrid& grid) {
    grid.validate();
    double lo = grid.elevations[0];
    for (double e : grid.elevations) lo = std::min(lo, e);
    RasterImage img;
    img.width = grid.width;
    img.height = grid.height;
    img.pixels.resize(grid.elevations.size());
    for (int v = 0; v < grid.height; ++v) {
        const int iy = grid.height - 1 - v;  // flip rows: image row 0 = north edge
        for (int u = 0; u < grid.width; ++u)
            img.at(u, v) = grid.at(u, iy) - lo;
    }
    return img;
}

}  // namespace terranav
