#include <algorithm>
#include <cmath>

#include "terranav/vo.hpp"

namespace terranav {

namespace {

constexpr int kPatchRadius = 5;    // 11x11 patch
constexpr int kSearchRadius = 24;  // px
constexpr double kMinZncc = 0.7;
constexpr int kNmsRadius = 5;

// Sobel gradients, zero outside a one-pixel border.
void sobel(const RasterImage& img, std::vector<double>& gx, std::vector<double>& gy) {
    const int w = img.width, h = img.height;
    gx.assign(size_t(w) * h, 0.0);
    gy.assign(size_t(w) * h, 0.0);
    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            const double a = img.at(x - 1, y - 1), b = img.at(x, y - 1), c = img.at(x + 1, y - 1);
            const double d = img.at(x - 1, y), f = img.at(x + 1, y);
            const double g = img.at(x - 1, y + 1), hh = img.at(x, y + 1), i = img.at(x + 1, y + 1);
            gx[size_t(y) * w + x] = (c + 2 * f + i - a - 2 * d - g) / 8.0;
            gy[size_t(y) * w + x] = (g + 2 * hh + i - a - 2 * b - c) / 8.0;
        }
    }
}

}  // namespace

std::vector<Eigen::Vector2d> detect_corners(const RasterImage& img, int max_n) {
    img.validate();
    const int w = img.width, h = img.height;
    std::vector<Eigen::Vector2d> out;
    if (max_n <= 0 || w < 2 * kPatchRadius + 3 || h < 2 * kPatchRadius + 3) return out;

    std::vector<double> gx, gy;
    sobel(img, gx, gy);

    // Min-eigenvalue score from the 3x3-summed structure tensor.
    const int margin = std::max(kPatchRadius + 1, 2);
    std::vector<std::pair<double, std::pair<int, int>>> scored;
    double max_score = 0.0;
    std::vector<double> score(size_t(w) * h, 0.0);
    for (int y = margin; y < h - margin; ++y) {
        for (int x = margin; x < w - margin; ++x) {
            double sxx = 0, syy = 0, sxy = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const double ix = gx[size_t(y + dy) * w + x + dx];
                    const double iy = gy[size_t(y + dy) * w + x + dx];
                    sxx += ix * ix;
                    syy += iy * iy;
                    sxy += ix * iy;
                }
            const double tr = sxx + syy;
            const double det = std::sqrt(std::max(0.0, (sxx - syy) * (sxx - syy) + 4 * sxy * sxy));
            const double lambda_min = 0.5 * (tr - det);
            score[size_t(y) * w + x] = lambda_min;
            max_score = std::max(max_score, lambda_min);
        }
    }
    if (max_score <= 1e-12) return out;  // flat image

    const double threshold = std::max(0.01 * max_score, 1e-12);
    for (int y = margin; y < h - margin; ++y)
        for (int x = margin; x < w - margin; ++x)
            if (score[size_t(y) * w + x] > threshold)
                scored.push_back({score[size_t(y) * w + x], {x, y}});
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    // Greedy non-maximum suppression on a coarse occupancy grid.
    const int cell = kNmsRadius;
    const int gw = w / cell + 2, gh = h / cell + 2;
    std::vector<std::vector<std::pair<int, int>>> grid(size_t(gw) * gh);
    for (const auto& [s, xy] : scored) {
        const auto [x, y] = xy;
        const int cx = x / cell, cy = y / cell;
        bool suppressed = false;
        for (int oy = -1; oy <= 1 && !suppressed; ++oy)
            for (int ox = -1; ox <= 1 && !suppressed; ++ox)
                for (const auto& [px, py] : grid[size_t(cy + oy + 1) * gw + cx + ox + 1])
                    if (std::abs(px - x) <= kNmsRadius && std::abs(py - y) <= kNmsRadius) {
                        suppressed = true;
                        break;
                    }
        if (suppressed) continue;
        grid[size_t(cy + 1) * gw + cx + 1].push_back({x, y});
        out.emplace_back(double(x), double(y));
        if (int(out.size()) >= max_n) break;
    }
    return out;
}

namespace {

// ZNCC between an 11x11 patch of `a` centered at (ax, ay) and of `b` at
// (bx, by). Returns -2 when either patch is flat.
double zncc(const RasterImage& a, int ax, int ay, const RasterImage& b, int bx, int by) {
    constexpr int r = kPatchRadius;
    constexpr int n = (2 * r + 1) * (2 * r + 1);
    double sa = 0, sb = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            sa += a.at(ax + dx, ay + dy);
            sb += b.at(bx + dx, by + dy);
        }
    const double ma = sa / n, mb = sb / n;
    double num = 0, da = 0, db = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const double va = a.at(ax + dx, ay + dy) - ma;
            const double vb = b.at(bx + dx, by + dy) - mb;
            num += va * vb;
            da += va * va;
            db += vb * vb;
        }
    if (da <= 1e-12 || db <= 1e-12) return -2.0;
    return num / std::sqrt(da * db);
}

double parabolic_offset(double l, double c, double r) {
    const double den = l - 2 * c + r;
    if (den >= -1e-12) return 0.0;
    return std::clamp(0.5 * (l - r) / den, -0.5, 0.5);
}

}  // namespace

std::vector<FeatureMatch> track_features(const RasterImage& prev, const RasterImage& cur,
                                         const std::vector<TrackedFeature>& prev_feats,
                                         const Eigen::Vector2d& predicted_flow) {
    if (prev.width != cur.width || prev.height != cur.height)
        throw std::invalid_argument("track_features: dimension mismatch");
    const int w = cur.width, h = cur.height;
    constexpr int r = kPatchRadius;
    std::vector<FeatureMatch> out;
    out.reserve(prev_feats.size());

    for (const auto& feat : prev_feats) {
        const int px = int(std::lround(feat.px.x()));
        const int py = int(std::lround(feat.px.y()));
        if (px < r || py < r || px >= prev.width - r || py >= prev.height - r) continue;
        const int sx = px + int(std::lround(predicted_flow.x()));
        const int sy = py + int(std::lround(predicted_flow.y()));

        // Coarse-to-fine ZNCC search around the predicted position.
        int best_x = 0, best_y = 0;
        double best = -3.0;
        for (int dy = -kSearchRadius; dy <= kSearchRadius; dy += 2) {
            const int cy = sy + dy;
            if (cy < r || cy >= h - r) continue;
            for (int dx = -kSearchRadius; dx <= kSearchRadius; dx += 2) {
                const int cx = sx + dx;
                if (cx < r || cx >= w - r) continue;
                const double s = zncc(prev, px, py, cur, cx, cy);
                if (s > best) {
                    best = s;
                    best_x = cx;
                    best_y = cy;
                }
            }
        }
        if (best < -2.5) continue;
        for (int dy = -2; dy <= 2; ++dy) {
            const int cy = best_y + dy;
            if (cy < r || cy >= h - r) continue;
            for (int dx = -2; dx <= 2; ++dx) {
                const int cx = best_x + dx;
                if (cx < r || cx >= w - r) continue;
                const double s = zncc(prev, px, py, cur, cx, cy);
                if (s > best) {
                    best = s;
                    best_x = cx;
                    best_y = cy;
                }
            }
        }
        if (best < kMinZncc) continue;

        // Parabolic sub-pixel refinement on the ZNCC surface.
        double fx = best_x, fy = best_y;
        if (best_x > r && best_x < w - r - 1) {
            const double l = zncc(prev, px, py, cur, best_x - 1, best_y);
            const double rr = zncc(prev, px, py, cur, best_x + 1, best_y);
            if (l > -2 && rr > -2) fx += parabolic_offset(l, best, rr);
        }
        if (best_y > r && best_y < h - r - 1) {
            const double u = zncc(prev, px, py, cur, best_x, best_y - 1);
            const double d = zncc(prev, px, py, cur, best_x, best_y + 1);
            if (u > -2 && d > -2) fy += parabolic_offset(u, best, d);
        }

        FeatureMatch m;
        m.track_id = feat.track_id;
        m.prev_px = feat.px;
        // Keep the sub-pixel part of the previous position: the integer
        // search measures displacement of the rounded center.
        m.cur_px = Eigen::Vector2d(fx + (feat.px.x() - px), fy + (feat.px.y() - py));
        m.score = best;
        out.push_back(m);
    }
    return out;
}

bool is_keyframe(int frames_since_last_kf, int current_feature_count,
                 double tracked_fraction) {
    return frames_since_last_kf > 20 && current_feature_count > 50 &&
           tracked_fraction < 0.90;
}

}  // namespace terranav
