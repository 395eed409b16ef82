#pragma once

#include <string>
#include <vector>

// Minimal self-contained SVG line charts (no display dependency).

namespace terranav {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f6fb2";
};

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series);

}  // namespace terranav
