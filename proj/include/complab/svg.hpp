#pragma once

// Small self-contained SVG chart writer for the run artifacts: line charts
// over epochs (with an optional horizontal reference) and bar charts for
// histograms.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "complab/common.hpp"

namespace complab {

struct Series {
    std::string name;
    std::string color;
    std::vector<double> values;
};

namespace svg_detail {

inline std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct Frame {
    double width = 760, height = 420;
    double left = 64, right = 16, top = 36, bottom = 44;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

    double px(double x) const {
        return left + (x - x0) / (x1 - x0) * (width - left - right);
    }
    double py(double y) const {
        return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom);
    }
};

inline void open_svg(std::ostream& os, const Frame& f, const std::string& title) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\""
       << f.height << "\" viewBox=\"0 0 " << f.width << " " << f.height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
}

inline void axes(std::ostream& os, const Frame& f, const std::string& xlabel,
                 const std::string& ylabel) {
    os << "<line x1=\"" << f.left << "\" y1=\"" << f.height - f.bottom << "\" x2=\""
       << f.width - f.right << "\" y2=\"" << f.height - f.bottom
       << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    os << "<line x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left << "\" y2=\""
       << f.height - f.bottom << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double xv = f.x0 + (f.x1 - f.x0) * i / 5.0;
        const double yv = f.y0 + (f.y1 - f.y0) * i / 5.0;
        os << "<text x=\"" << f.px(xv) << "\" y=\"" << f.height - f.bottom + 16
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
           << num(xv) << "</text>\n";
        os << "<text x=\"" << f.left - 6 << "\" y=\"" << f.py(yv) + 3
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << num(yv)
           << "</text>\n";
    }
    os << "<text x=\"" << (f.left + f.width - f.right) / 2 << "\" y=\"" << f.height - 8
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << xlabel
       << "</text>\n";
    os << "<text x=\"14\" y=\"" << (f.top + f.height - f.bottom) / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
       << "transform=\"rotate(-90 14 " << (f.top + f.height - f.bottom) / 2 << ")\">" << ylabel
       << "</text>\n";
}

}  // namespace svg_detail

// Multi-series line chart over 1-based epoch indices; `reference` draws a
// horizontal gray line when finite.
inline void write_line_chart(std::ostream& os, const std::string& title, const std::string& xlabel,
                             const std::string& ylabel, std::span<const Series> series,
                             double reference = std::nan(""), const std::string& ref_label = "") {
    using namespace svg_detail;
    require(!series.empty(), Errc::parameter, "no series to plot");
    Frame f;
    f.x0 = 1;
    f.x1 = 1;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const Series& s : series) {
        f.x1 = std::max(f.x1, static_cast<double>(s.values.size()));
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (std::isfinite(reference)) {
        lo = std::min(lo, reference);
        hi = std::max(hi, reference);
    }
    if (!(hi > lo)) {
        hi = lo + 1.0;
    }
    const double pad = (hi - lo) * 0.08;
    f.y0 = lo - pad;
    f.y1 = hi + pad;
    if (f.x1 <= f.x0) {
        f.x1 = f.x0 + 1;
    }

    open_svg(os, f, title);
    axes(os, f, xlabel, ylabel);

    if (std::isfinite(reference)) {
        os << "<line x1=\"" << f.left << "\" y1=\"" << f.py(reference) << "\" x2=\""
           << f.width - f.right << "\" y2=\"" << f.py(reference)
           << "\" stroke=\"gray\" stroke-width=\"1.2\" stroke-dasharray=\"6,3\"/>\n";
        if (!ref_label.empty()) {
            os << "<text x=\"" << f.width - f.right - 4 << "\" y=\"" << f.py(reference) - 4
               << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\" "
               << "fill=\"gray\">" << ref_label << "</text>\n";
        }
    }

    double legend_y = f.top + 6;
    for (const Series& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < s.values.size(); ++i) {
            os << num(f.px(static_cast<double>(i + 1))) << "," << num(f.py(s.values[i]))
               << (i + 1 < s.values.size() ? " " : "");
        }
        os << "\"/>\n";
        os << "<rect x=\"" << f.left + 8 << "\" y=\"" << legend_y - 8
           << "\" width=\"14\" height=\"3\" fill=\"" << s.color << "\"/>\n";
        os << "<text x=\"" << f.left + 26 << "\" y=\"" << legend_y - 3
           << "\" font-family=\"sans-serif\" font-size=\"10\">" << s.name << "</text>\n";
        legend_y += 14;
    }
    os << "</svg>\n";
}

// Histogram bar chart. The legend annotates the total plotted mass.
inline void write_bar_chart(std::ostream& os, const std::string& title, const std::string& xlabel,
                            const std::string& ylabel, std::span<const double> bin_edges,
                            std::span<const double> mass, const std::string& annotation = "") {
    using namespace svg_detail;
    require(bin_edges.size() == mass.size() + 1 && !mass.empty(), Errc::parameter,
            "histogram shape mismatch");
    Frame f;
    f.x0 = bin_edges.front();
    f.x1 = bin_edges.back();
    f.y0 = 0.0;
    f.y1 = 1e-12;
    double total = 0.0;
    for (double m : mass) {
        f.y1 = std::max(f.y1, m);
        total += m;
    }
    f.y1 *= 1.1;

    open_svg(os, f, title);
    axes(os, f, xlabel, ylabel);
    for (size_t i = 0; i < mass.size(); ++i) {
        const double xa = f.px(bin_edges[i]);
        const double xb = f.px(bin_edges[i + 1]);
        const double y = f.py(mass[i]);
        os << "<rect x=\"" << num(xa + 0.5) << "\" y=\"" << num(y) << "\" width=\""
           << num(std::max(0.5, xb - xa - 1.0)) << "\" height=\""
           << num(f.py(0.0) - y) << "\" fill=\"steelblue\"/>\n";
    }
    std::string note = "total mass = " + num(total);
    if (!annotation.empty()) {
        note += ", " + annotation;
    }
    os << "<text x=\"" << f.width - f.right - 4 << "\" y=\"" << f.top + 6
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << note
       << "</text>\n";
    os << "</svg>\n";
}

}  // namespace complab
