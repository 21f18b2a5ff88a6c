#include "oscope/svg.hpp"

#include <algorithm>
#include <cstdio>

namespace oscope::svg {

namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
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

std::string header(const std::string& title, const std::string& y_label) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
                    "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) + "</text>\n";
    s += "<text transform=\"translate(18," + num(kHeight / 2) + ") rotate(-90)\" text-anchor=\"middle\">" + escape(y_label) +
         "</text>\n";
    return s;
}

std::string axes(double y_max) {
    const double x0 = kLeft, y0 = kHeight - kBottom, x1 = kWidth - kRight, y1 = kTop;
    std::string s = "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y0) +
                    "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y1) + "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = y_max * i / 4.0;
        const double y = y0 - (y0 - y1) * i / 4.0;
        s += "<text x=\"" + num(x0 - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + num(v) + "</text>\n";
        s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y) +
             "\" stroke=\"#dddddd\"/>\n";
    }
    return s;
}

}  // namespace

std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<Bar>& bars) {
    double y_max = 0.0;
    for (const auto& b : bars) y_max = std::max(y_max, b.value);
    if (y_max <= 0.0) y_max = 1.0;
    std::string s = header(title, y_label) + axes(y_max);
    const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
    const double slot = bars.empty() ? plot_w : plot_w / static_cast<double>(bars.size());
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double h = plot_h * bars[i].value / y_max;
        const double x = kLeft + slot * static_cast<double>(i) + slot * 0.15;
        s += "<rect x=\"" + num(x) + "\" y=\"" + num(kHeight - kBottom - h) + "\" width=\"" + num(slot * 0.7) +
             "\" height=\"" + num(h) + "\" fill=\"" + kPalette[0] + "\"/>\n";
        s += "<text x=\"" + num(x + slot * 0.35) + "\" y=\"" + num(kHeight - kBottom + 18) + "\" text-anchor=\"middle\">" +
             escape(bars[i].label) + "</text>\n";
        s += "<text x=\"" + num(x + slot * 0.35) + "\" y=\"" + num(kHeight - kBottom - h - 4) +
             "\" text-anchor=\"middle\" font-size=\"10\">" + num(bars[i].value) + "</text>\n";
    }
    return s + "</svg>\n";
}

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series) {
    double x_min = 0, x_max = 1, y_max = 0;
    bool first = true;
    for (const auto& sr : series)
        for (const auto& [x, y] : sr.points) {
            if (first) x_min = x_max = x, first = false;
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
            y_max = std::max(y_max, y);
        }
    if (x_max <= x_min) x_max = x_min + 1;
    if (y_max <= 0) y_max = 1;
    std::string s = header(title, y_label) + axes(y_max);
    const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
    s += "<text x=\"" + num(kLeft + plot_w / 2) + "\" y=\"" + num(kHeight - 15) + "\" text-anchor=\"middle\">" +
         escape(x_label) + "</text>\n";
    s += "<text x=\"" + num(kLeft) + "\" y=\"" + num(kHeight - kBottom + 18) + "\" text-anchor=\"middle\">" + num(x_min) + "</text>\n";
    s += "<text x=\"" + num(kWidth - kRight) + "\" y=\"" + num(kHeight - kBottom + 18) + "\" text-anchor=\"middle\">" +
         num(x_max) + "</text>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % std::size(kPalette)];
        std::string pts;
        for (const auto& [x, y] : series[i].points) {
            pts += num(kLeft + plot_w * (x - x_min) / (x_max - x_min)) + "," + num(kHeight - kBottom - plot_h * y / y_max) + " ";
        }
        s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        s += "<text x=\"" + num(kWidth - kRight - 4) + "\" y=\"" + num(kTop + 16.0 * static_cast<double>(i + 1)) +
             "\" text-anchor=\"end\" fill=\"" + color + "\">" + escape(series[i].name) + "</text>\n";
    }
    return s + "</svg>\n";
}

}  // namespace oscope::svg
