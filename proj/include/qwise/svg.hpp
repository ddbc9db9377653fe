#pragma once

// Minimal SVG writers for maps and sweep curves. Output depends only on the
// input values, so identical data gives identical bytes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "qwise/raster.hpp"

namespace qwise::svg {

enum class Scale { sequential, diverging };

namespace detail {

inline std::string num(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

using Rgb = std::array<double, 3>;

inline Rgb lerp(const std::vector<Rgb>& stops, double u) {
    u = std::clamp(u, 0.0, 1.0) * static_cast<double>(stops.size() - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(u), stops.size() - 2);
    const double f = u - static_cast<double>(i);
    Rgb c{};
    for (int k = 0; k < 3; ++k) c[k] = stops[i][k] + f * (stops[i + 1][k] - stops[i][k]);
    return c;
}

inline std::string hex(Rgb c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(c[0])),
                  static_cast<int>(std::lround(c[1])), static_cast<int>(std::lround(c[2])));
    return buf;
}

// blue - white - red
inline const std::vector<Rgb>& diverging_stops() {
    static const std::vector<Rgb> s{{33, 102, 172}, {146, 197, 222}, {247, 247, 247}, {244, 165, 130}, {178, 24, 43}};
    return s;
}

// viridis anchors
inline const std::vector<Rgb>& sequential_stops() {
    static const std::vector<Rgb> s{{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    return s;
}

}  // namespace detail

struct HeatmapStyle {
    std::string title;
    std::string unit;
    Scale scale = Scale::sequential;
    double display_factor = 1.0;  // value * factor is what the color bar shows
    int cell_px = 10;
};

// Diverging maps use limits symmetric about zero; sequential maps use
// [min, max]. Non-finite pixels are drawn grey.
inline std::string heatmap(const RasterMap& map, const HeatmapStyle& style) {
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (double v : map.data()) {
        if (!std::isfinite(v)) continue;
        const double s = v * style.display_factor;
        lo = any ? std::min(lo, s) : s;
        hi = any ? std::max(hi, s) : s;
        any = true;
    }
    if (style.scale == Scale::diverging) {
        const double m = std::max(std::abs(lo), std::abs(hi));
        lo = -m;
        hi = m;
    }
    const double span = hi > lo ? hi - lo : 1.0;

    const int cell = std::max(style.cell_px, 1);
    const int w = static_cast<int>(map.width()) * cell, h = static_cast<int>(map.height()) * cell;
    const int left = 60, top = 40, bar = 20, right = 110, bottom = 50;
    const int total_w = left + w + 20 + bar + right, total_h = top + h + bottom;
    const double pitch_um = map.pixel_pitch_m() * 1e6;

    std::string s;
    s.reserve(map.size() * 80 + 4096);
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(total_w) + "\" height=\"" +
         std::to_string(total_h) + "\" viewBox=\"0 0 " + std::to_string(total_w) + " " + std::to_string(total_h) +
         "\">\n";
    s += "<!-- scale: " + std::string(style.scale == Scale::diverging ? "diverging" : "sequential") +
         " min=" + detail::num(lo, 9) + " max=" + detail::num(hi, 9) + " unit=" + detail::escape(style.unit) + " -->\n";
    s += "<text x=\"" + std::to_string(left) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" +
         detail::escape(style.title) + "</text>\n";
    s += "<g shape-rendering=\"crispEdges\">\n";
    const auto& stops = style.scale == Scale::diverging ? detail::diverging_stops() : detail::sequential_stops();
    for (std::size_t iy = 0; iy < map.height(); ++iy)
        for (std::size_t ix = 0; ix < map.width(); ++ix) {
            const double v = map(ix, iy);
            const std::string fill =
                std::isfinite(v) ? detail::hex(detail::lerp(stops, (v * style.display_factor - lo) / span)) : "#808080";
            // y grows upward in the image frame
            const int px = left + static_cast<int>(ix) * cell;
            const int py = top + (static_cast<int>(map.height() - 1 - iy)) * cell;
            s += "<rect x=\"" + std::to_string(px) + "\" y=\"" + std::to_string(py) + "\" width=\"" +
                 std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"" + fill + "\"/>\n";
        }
    s += "</g>\n";
    s += "<rect x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(top) + "\" width=\"" + std::to_string(w) +
         "\" height=\"" + std::to_string(h) + "\" fill=\"none\" stroke=\"black\"/>\n";

    // axes in microns
    const double width_um = pitch_um * static_cast<double>(map.width());
    const double height_um = pitch_um * static_cast<double>(map.height());
    for (int k = 0; k <= 4; ++k) {
        const double fx = k / 4.0;
        const int x = left + static_cast<int>(std::lround(fx * w));
        const int y = top + h - static_cast<int>(std::lround(fx * h));
        s += "<text x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(top + h + 16) +
             "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" + detail::num(fx * width_um, 4) +
             "</text>\n";
        s += "<text x=\"" + std::to_string(left - 6) + "\" y=\"" + std::to_string(y + 3) +
             "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" + detail::num(fx * height_um, 4) +
             "</text>\n";
    }
    s += "<text x=\"" + std::to_string(left + w / 2) + "\" y=\"" + std::to_string(top + h + 36) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">x (&#181;m)</text>\n";
    s += "<text x=\"16\" y=\"" + std::to_string(top + h / 2) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         std::to_string(top + h / 2) + ")\">y (&#181;m)</text>\n";

    // color bar
    const int bx = left + w + 20;
    const int steps = 64;
    for (int k = 0; k < steps; ++k) {
        const double u = (k + 0.5) / steps;
        const int y0 = top + h - static_cast<int>(std::lround((k + 1.0) / steps * h));
        const int y1 = top + h - static_cast<int>(std::lround(static_cast<double>(k) / steps * h));
        s += "<rect x=\"" + std::to_string(bx) + "\" y=\"" + std::to_string(y0) + "\" width=\"" + std::to_string(bar) +
             "\" height=\"" + std::to_string(y1 - y0) + "\" fill=\"" + detail::hex(detail::lerp(stops, u)) + "\"/>\n";
    }
    s += "<text x=\"" + std::to_string(bx + bar + 4) + "\" y=\"" + std::to_string(top + 8) +
         "\" font-family=\"sans-serif\" font-size=\"10\">" + detail::num(hi, 4) + "</text>\n";
    s += "<text x=\"" + std::to_string(bx + bar + 4) + "\" y=\"" + std::to_string(top + h) +
         "\" font-family=\"sans-serif\" font-size=\"10\">" + detail::num(lo, 4) + "</text>\n";
    s += "<text x=\"" + std::to_string(bx + bar + 4) + "\" y=\"" + std::to_string(top + h / 2) +
         "\" font-family=\"sans-serif\" font-size=\"10\">" + detail::escape(style.unit) + "</text>\n";
    s += "</svg>\n";
    return s;
}

struct Series {
    std::string label;
    std::string color;
    std::vector<double> x;
    std::vector<double> y;
};

struct LinePlotStyle {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = true;
    double y_floor = 1e-12;  // log axis clamp
    std::vector<double> markers_x;  // dashed vertical lines
    double threshold_y = 0.0;       // dashed horizontal line when > 0
};

inline std::string line_plot(const std::vector<Series>& series, const LinePlotStyle& style) {
    const int left = 70, top = 40, w = 560, h = 320, bottom = 50, right = 150;
    const int total_w = left + w + right, total_h = top + h + bottom;
    double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    bool any = false;
    auto ty = [&](double v) { return style.log_y ? std::log10(std::max(v, style.y_floor)) : v; };
    for (const auto& ser : series)
        for (std::size_t k = 0; k < ser.x.size(); ++k) {
            if (!std::isfinite(ser.x[k]) || !std::isfinite(ser.y[k])) continue;
            const double yy = ty(ser.y[k]);
            if (!any) {
                x0 = x1 = ser.x[k];
                y0 = y1 = yy;
                any = true;
            }
            x0 = std::min(x0, ser.x[k]);
            x1 = std::max(x1, ser.x[k]);
            y0 = std::min(y0, yy);
            y1 = std::max(y1, yy);
        }
    if (style.threshold_y > 0.0) {
        y0 = std::min(y0, ty(style.threshold_y));
        y1 = std::max(y1, ty(style.threshold_y));
    }
    if (style.log_y) {
        y0 = std::floor(y0);
        y1 = std::ceil(y1);
    }
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) y1 = y0 + 1.0;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * w; };
    auto py = [&](double y) { return top + h - (ty(y) - y0) / (y1 - y0) * h; };

    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(total_w) + "\" height=\"" +
         std::to_string(total_h) + "\" viewBox=\"0 0 " + std::to_string(total_w) + " " + std::to_string(total_h) +
         "\">\n";
    s += "<!-- x range " + detail::num(x0, 9) + " .. " + detail::num(x1, 9) + "; y range " +
         (style.log_y ? "log10 " : "") + detail::num(y0, 9) + " .. " + detail::num(y1, 9) + " -->\n";
    s += "<text x=\"" + std::to_string(left) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" +
         detail::escape(style.title) + "</text>\n";
    s += "<rect x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(top) + "\" width=\"" + std::to_string(w) +
         "\" height=\"" + std::to_string(h) + "\" fill=\"white\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4.0;
        s += "<text x=\"" + detail::num(px(xv), 6) + "\" y=\"" + std::to_string(top + h + 16) +
             "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" + detail::num(xv, 4) +
             "</text>\n";
    }
    const int yticks = style.log_y ? static_cast<int>(y1 - y0) : 4;
    for (int k = 0; k <= yticks; ++k) {
        const double yv = y0 + (y1 - y0) * k / std::max(yticks, 1);
        const double ypix = top + h - (yv - y0) / (y1 - y0) * h;
        const std::string label = style.log_y ? "1e" + detail::num(yv, 3) : detail::num(yv, 4);
        s += "<text x=\"" + std::to_string(left - 6) + "\" y=\"" + detail::num(ypix + 3, 6) +
             "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" + label + "</text>\n";
    }
    s += "<text x=\"" + std::to_string(left + w / 2) + "\" y=\"" + std::to_string(top + h + 36) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" + detail::escape(style.x_label) +
         "</text>\n";
    s += "<text x=\"16\" y=\"" + std::to_string(top + h / 2) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         std::to_string(top + h / 2) + ")\">" + detail::escape(style.y_label) + "</text>\n";

    for (double m : style.markers_x) {
        if (m < x0 || m > x1) continue;
        s += "<line x1=\"" + detail::num(px(m), 6) + "\" y1=\"" + std::to_string(top) + "\" x2=\"" +
             detail::num(px(m), 6) + "\" y2=\"" + std::to_string(top + h) +
             "\" stroke=\"black\" stroke-dasharray=\"6 4\"/>\n";
    }
    if (style.threshold_y > 0.0)
        s += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + detail::num(py(style.threshold_y), 6) + "\" x2=\"" +
             std::to_string(left + w) + "\" y2=\"" + detail::num(py(style.threshold_y), 6) +
             "\" stroke=\"grey\" stroke-dasharray=\"2 3\"/>\n";

    int legend_y = top + 10;
    for (const auto& ser : series) {
        std::string pts;
        for (std::size_t k = 0; k < ser.x.size(); ++k) {
            if (!std::isfinite(ser.x[k]) || !std::isfinite(ser.y[k])) continue;
            pts += detail::num(px(ser.x[k]), 6) + "," + detail::num(py(ser.y[k]), 6) + " ";
        }
        s += "<polyline fill=\"none\" stroke=\"" + ser.color + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        s += "<text x=\"" + std::to_string(left + w + 10) + "\" y=\"" + std::to_string(legend_y) +
             "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + ser.color + "\">" + detail::escape(ser.label) +
             "</text>\n";
        legend_y += 16;
    }
    s += "</svg>\n";
    return s;
}

}  // namespace qwise::svg
