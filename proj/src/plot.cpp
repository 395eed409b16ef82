#include "terranav/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace terranav {

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series) {
    const int width = 720, height = 480;
    const int ml = 70, mr = 30, mt = 50, mb = 60;

    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool first = true;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (first) {
                x0 = x1 = s.x[i];
                y0 = y1 = s.y[i];
                first = false;
            }
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (x1 - x0 < 1e-12) x1 = x0 + 1.0;
    if (y1 - y0 < 1e-12) y1 = y0 + 1.0;
    y0 = std::min(y0, 0.0);
    const double ypad = 0.05 * (y1 - y0);
    y1 += ypad;

    auto sx = [&](double x) { return ml + (x - x0) / (x1 - x0) * (width - ml - mr); };
    auto sy = [&](double y) { return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb); };

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
        << height << "' viewBox='0 0 " << width << " " << height << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='16' "
        << "font-family='sans-serif'>" << title << "</text>\n";

    // Axes and ticks
    svg << "<line x1='" << ml << "' y1='" << height - mb << "' x2='" << width - mr
        << "' y2='" << height - mb << "' stroke='black'/>\n";
    svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='"
        << height - mb << "' stroke='black'/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double xv = x0 + (x1 - x0) * i / 5.0;
        const double yv = y0 + (y1 - y0) * i / 5.0;
        svg << "<line x1='" << sx(xv) << "' y1='" << height - mb << "' x2='" << sx(xv)
            << "' y2='" << height - mb + 5 << "' stroke='black'/>\n";
        svg << "<text x='" << sx(xv) << "' y='" << height - mb + 20
            << "' text-anchor='middle' font-size='11' font-family='sans-serif'>" << xv
            << "</text>\n";
        svg << "<line x1='" << ml - 5 << "' y1='" << sy(yv) << "' x2='" << ml << "' y2='"
            << sy(yv) << "' stroke='black'/>\n";
        svg << "<text x='" << ml - 8 << "' y='" << sy(yv) + 4
            << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << yv
            << "</text>\n";
    }
    svg << "<text x='" << (ml + width - mr) / 2 << "' y='" << height - 16
        << "' text-anchor='middle' font-size='13' font-family='sans-serif'>" << x_label
        << "</text>\n";
    svg << "<text x='18' y='" << (mt + height - mb) / 2
        << "' text-anchor='middle' font-size='13' font-family='sans-serif' "
        << "transform='rotate(-90 18 " << (mt + height - mb) / 2 << ")'>" << y_label
        << "</text>\n";

    int legend_y = mt;
    for (const auto& s : series) {
        if (s.x.empty()) continue;
        svg << "<polyline fill='none' stroke='" << s.color << "' stroke-width='2' points='";
        for (size_t i = 0; i < s.x.size(); ++i)
            svg << sx(s.x[i]) << "," << sy(s.y[i]) << " ";
        svg << "'/>\n";
        for (size_t i = 0; i < s.x.size(); ++i)
            svg << "<circle cx='" << sx(s.x[i]) << "' cy='" << sy(s.y[i])
                << "' r='3' fill='" << s.color << "'/>\n";
        if (!s.label.empty()) {
            svg << "<rect x='" << width - mr - 150 << "' y='" << legend_y - 9
                << "' width='12' height='12' fill='" << s.color << "'/>\n";
            svg << "<text x='" << width - mr - 132 << "' y='" << legend_y + 1
                << "' font-size='12' font-family='sans-serif'>" << s.label << "</text>\n";
            legend_y += 18;
        }
    }
    svg << "</svg>\n";

    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << svg.str();
}

}  // namespace terranav
