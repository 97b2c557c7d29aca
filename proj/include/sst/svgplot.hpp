#pragma once
// Minimal deterministic SVG line plots for sweep and training curves. No
// styling knobs beyond a series name; every number is formatted with %g so a
// rerun writes byte-identical files.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "sst/errors.hpp"

namespace sst {

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points; // (x, y)
};

namespace detail {

inline std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

} // namespace detail

inline void write_line_svg(const std::string& path, const std::string& title,
                           const std::string& x_label, const std::string& y_label,
                           const std::vector<PlotSeries>& series) {
    expect(!series.empty(), Errc::empty_dataset, "svg plot: no series");
    for (const auto& s : series)
        expect(!s.points.empty(), Errc::empty_dataset, "svg plot: series '" + s.name +
                                                           "' has no points");

    double x_min = series[0].points[0].first, x_max = x_min;
    double y_min = series[0].points[0].second, y_max = y_min;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y);
        }
    if (x_max == x_min) x_max = x_min + 1;
    if (y_max == y_min) y_max = y_min + 1;

    const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
    auto px = [&](double x) { return L + (x - x_min) / (x_max - x_min) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y_min) / (y_max - y_min) * (H - T - B); };

    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    const size_t n_colors = sizeof(kColors) / sizeof(kColors[0]);

    std::ofstream f(path, std::ios::binary);
    expect(f.good(), Errc::io_failure, "svg plot: cannot open " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
      << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"15\">" << title << "</text>\n";

    // axes with four ticks per side
    f << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"#333\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"#333\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        double fx = x_min + (x_max - x_min) * k / 4.0;
        double fy = y_min + (y_max - y_min) * k / 4.0;
        f << "<text x=\"" << detail::fmt_g(px(fx)) << "\" y=\"" << H - B + 18
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
          << detail::fmt_g(fx) << "</text>\n"
          << "<text x=\"" << L - 8 << "\" y=\"" << detail::fmt_g(py(fy) + 4)
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
          << detail::fmt_g(fy) << "</text>\n";
    }
    f << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
      << "</text>\n"
      << "<text x=\"16\" y=\"" << H / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\""
      << " transform=\"rotate(-90 16 " << H / 2 << ")\">" << y_label << "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const char* color = kColors[si % n_colors];
        f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, y] : series[si].points)
            f << detail::fmt_g(px(x)) << "," << detail::fmt_g(py(y)) << " ";
        f << "\"/>\n";
        for (const auto& [x, y] : series[si].points)
            f << "<circle cx=\"" << detail::fmt_g(px(x)) << "\" cy=\"" << detail::fmt_g(py(y))
              << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        f << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 16 + 16 * static_cast<double>(si)
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color
          << "\">" << series[si].name << "</text>\n";
    }
    f << "</svg>\n";
    expect(f.good(), Errc::io_failure, "svg plot: write failed for " + path);
}

} // namespace sst
