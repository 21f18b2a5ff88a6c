#pragma once

#include <string>
#include <utility>
#include <vector>

namespace oscope::svg {

struct Bar {
    std::string label;
    double value = 0.0;
};

/// Vertical bar chart; values are drawn on a 0..max(values) axis.
std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<Bar>& bars);

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

/// Line chart with one polyline per series and a shared axis range.
std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series);

}  // namespace oscope::svg
