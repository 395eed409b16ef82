#include "terranav/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "terranav/fusion_lba.hpp"

namespace terranav {

ApeStats ape(const Trajectory& estimate, const Trajectory& ground_truth,
             const ApeOptions& opts) {
    if (estimate.size() == 0 || ground_truth.size() == 0)
        throw std::invalid_argument("ape: empty trajectory");

    // Associate by nearest timestamp within tolerance (both sorted).
    std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> pairs;
    size_t j = 0;
    for (size_t i = 0; i < estimate.size(); ++i) {
        const double t = estimate.stamps[i];
        while (j + 1 < ground_truth.size() &&
               std::abs(ground_truth.stamps[j + 1] - t) <= std::abs(ground_truth.stamps[j] - t))
            ++j;
        if (std::abs(ground_truth.stamps[j] - t) <= opts.associate_tol)
            pairs.push_back({estimate.positions[i], ground_truth.positions[j]});
    }
    if (pairs.empty())
        throw std::invalid_argument("ape: no timestamp-associated pairs within tolerance");

    std::vector<Eigen::Vector3d> est(pairs.size()), gt(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        est[i] = pairs[i].first;
        gt[i] = pairs[i].second;
    }
    if (opts.align_first) {
        const FrameTransform h = align_trajectories(est, gt, opts.align_with_scale);
        for (auto& p : est) p = h.apply(p);
    }

    std::vector<double> errors(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) errors[i] = (est[i] - gt[i]).norm();

    ApeStats s;
    s.count = errors.size();
    double sum = 0.0, sum_sq = 0.0;
    s.min = errors[0];
    s.max = errors[0];
    for (double e : errors) {
        sum += e;
        sum_sq += e * e;
        s.min = std::min(s.min, e);
        s.max = std::max(s.max, e);
    }
    s.mean = sum / double(s.count);
    s.rmse = std::sqrt(sum_sq / double(s.count));
    // Population std from the definitional identity, so rmse^2 = mean^2 + std^2
    // holds to rounding.
    s.std = std::sqrt(std::max(0.0, s.rmse * s.rmse - s.mean * s.mean));
    std::vector<double> sorted = errors;
    std::sort(sorted.begin(), sorted.end());
    s.median = s.count % 2 == 1 ? sorted[s.count / 2]
                                : 0.5 * (sorted[s.count / 2 - 1] + sorted[s.count / 2]);
    return s;
}

MatchingErrorHistogram matching_error_histogram(
    const std::vector<std::pair<double, double>>& offsets) {
    if (offsets.empty())
        throw std::invalid_argument("matching_error_histogram: empty input");

    MatchingErrorHistogram h;
    h.total = offsets.size();
    // 0.1 px bins up to 2 px, then doubling bins up to 32 px, then overflow.
    for (int i = 0; i <= 20; ++i) h.bin_edges.push_back(0.1 * i);
    for (double e = 4.0; e <= 32.0; e *= 2.0) h.bin_edges.push_back(e);
    h.counts.assign(h.bin_edges.size(), 0);  // last bin catches the overflow

    double sum = 0.0;
    for (const auto& [dx, dy] : offsets) {
        const double r = std::hypot(dx, dy);
        sum += r;
        if (r > 5.0) ++h.failures;
        size_t bin = h.bin_edges.size() - 1;
        for (size_t i = 1; i < h.bin_edges.size(); ++i)
            if (r < h.bin_edges[i]) {
                bin = i - 1;
                break;
            }
        ++h.counts[bin];
    }
    h.mean_radial = sum / double(h.total);
    return h;
}

std::string ape_csv_row(const ApeStats& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", s.max, s.median, s.min,
                  s.mean, s.rmse, s.std);
    return buf;
}

}  // namespace terranav
