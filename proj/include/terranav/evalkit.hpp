#pragma once

#include <string>
#include <vector>

#include "terranav/se3.hpp"

// Trajectory accuracy statistics (absolute position error) and matching-error
// distributions.

namespace terranav {

struct ApeStats {
    double max = 0.0;
    double median = 0.0;
    double min = 0.0;
    double mean = 0.0;
    double rmse = 0.0;
    double std = 0.0;  // population convention, so rmse^2 == mean^2 + std^2
    size_t count = 0;
};

struct ApeOptions {
    double associate_tol = 0.05;  // seconds
    bool align_first = false;     // rigid pre-alignment for VO-only baselines
    bool align_with_scale = false;
};

// Per-pair Euclidean position error over timestamp-associated samples.
// Throws when no pairs associate within the tolerance.
ApeStats ape(const Trajectory& estimate, const Trajectory& ground_truth,
             const ApeOptions& opts = {});

struct MatchingErrorHistogram {
    std::vector<double> bin_edges;  // radial error, px; 0.1 px bins to 2 px,
                                    // then doubling bins
    std::vector<int> counts;
    double mean_radial = 0.0;
    int failures = 0;  // radial error > 5 px
    size_t total = 0;
};

MatchingErrorHistogram matching_error_histogram(
    const std::vector<std::pair<double, double>>& offsets);

// One CSV row in the order max, median, min, mean, rmse, std.
std::string ape_csv_row(const ApeStats& s);

}  // namespace terranav
