#pragma once

// Self-contained SVG scatter plots of a 2D projection, one colour per label class.

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>

#include "error.hpp"
#include "projection.hpp"

namespace seqembed {

inline constexpr std::array<std::string_view, 6> scatter_palette = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
};

struct ScatterStyle {
    int width = 720;
    int height = 520;
    int margin = 40;
    int legend_width = 160;
    double radius = 5.0;
    std::string title;
};

namespace detail {

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace detail

/// Renders the scatter. Classes are ordered by label value; `class_names` supplies legend text
/// (missing entries render as "class <label>"). Output depends only on the inputs.
inline std::string render_scatter_svg(const Projection2D & proj, std::span<const int> labels,
                                      const std::map<int, std::string> & class_names,
                                      const ScatterStyle & style = {}) {
    if (labels.size() != proj.n) {
        fail(ErrorKind::Alignment, "scatter has " + std::to_string(proj.n) + " points but " +
                                       std::to_string(labels.size()) + " labels");
    }
    const std::set<int> classes(labels.begin(), labels.end());
    std::map<int, std::size_t> colour_of;
    for (int c : classes) colour_of.emplace(c, colour_of.size());

    double min_x = 0.0, max_x = 0.0, min_y = 0.0, max_y = 0.0;
    for (std::size_t i = 0; i < proj.n; ++i) {
        if (i == 0 || proj.x(i) < min_x) min_x = proj.x(i);
        if (i == 0 || proj.x(i) > max_x) max_x = proj.x(i);
        if (i == 0 || proj.y(i) < min_y) min_y = proj.y(i);
        if (i == 0 || proj.y(i) > max_y) max_y = proj.y(i);
    }
    const double plot_w = style.width - style.legend_width - 2.0 * style.margin;
    const double plot_h = style.height - 2.0 * style.margin;
    auto map_axis = [](double v, double lo, double hi, double origin, double extent) {
        if (hi - lo <= 0.0) return origin + 0.5 * extent;
        return origin + (v - lo) / (hi - lo) * extent;
    };

    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(style.width) + "\" height=\"" +
           std::to_string(style.height) + "\" viewBox=\"0 0 " + std::to_string(style.width) + " " +
           std::to_string(style.height) + "\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(style.width) + "\" height=\"" +
           std::to_string(style.height) + "\" fill=\"white\"/>\n";
    svg += "<rect x=\"" + std::to_string(style.margin) + "\" y=\"" + std::to_string(style.margin) + "\" width=\"" +
           detail::fmt2(plot_w) + "\" height=\"" + detail::fmt2(plot_h) +
           "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    if (!style.title.empty()) {
        svg += "<text x=\"" + std::to_string(style.margin) + "\" y=\"" + std::to_string(style.margin - 12) +
               "\" font-family=\"sans-serif\" font-size=\"14\">" + detail::xml_escape(style.title) + "</text>\n";
    }

    svg += "<g class=\"points\">\n";
    const double pad = style.radius + 2.0;
    for (std::size_t i = 0; i < proj.n; ++i) {
        // SVG y grows downwards.
        const double px = map_axis(proj.x(i), min_x, max_x, style.margin + pad, plot_w - 2.0 * pad);
        const double py = map_axis(-proj.y(i), -max_y, -min_y, style.margin + pad, plot_h - 2.0 * pad);
        const auto colour = scatter_palette[colour_of.at(labels[i]) % scatter_palette.size()];
        svg += "<circle cx=\"" + detail::fmt2(px) + "\" cy=\"" + detail::fmt2(py) + "\" r=\"" +
               detail::fmt2(style.radius) + "\" fill=\"" + std::string(colour) +
               "\" fill-opacity=\"0.85\" data-label=\"" + std::to_string(labels[i]) + "\"/>\n";
    }
    svg += "</g>\n";

    svg += "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
    const int legend_x = style.width - style.legend_width;
    int row = 0;
    for (int c : classes) {
        const int y = style.margin + 10 + 20 * row++;
        const auto it = class_names.find(c);
        const std::string name = it != class_names.end() ? it->second : "class " + std::to_string(c);
        svg += "<g class=\"legend-entry\"><circle cx=\"" + std::to_string(legend_x + 6) + "\" cy=\"" +
               std::to_string(y) + "\" r=\"5\" fill=\"" +
               std::string(scatter_palette[colour_of.at(c) % scatter_palette.size()]) + "\"/><text x=\"" +
               std::to_string(legend_x + 18) + "\" y=\"" + std::to_string(y + 4) + "\">" +
               detail::xml_escape(name) + "</text></g>\n";
    }
    svg += "</g>\n</svg>\n";
    return svg;
}

inline void write_scatter_svg(const Projection2D & proj, std::span<const int> labels,
                              const std::map<int, std::string> & class_names, const std::string & path,
                              const ScatterStyle & style = {}) {
    const std::string svg = render_scatter_svg(proj, labels, class_names, style);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
    }
    out << svg;
    if (!out) {
        fail(ErrorKind::Io, "write to '" + path + "' failed");
    }
}

} // namespace seqembed
