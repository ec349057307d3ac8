#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sdlpgc/tensor.hpp"

// Static SVG charts; written to files, never displayed.
namespace sdlpgc::plot {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series);

struct BarGroup {
    std::string name;
    std::vector<double> values;  // one per category
};

std::string bar_chart(const std::string& title, const std::vector<std::string>& categories,
                      const std::vector<BarGroup>& groups);

/// Heatmap of a 2-d matrix, white (min) to dark blue (max).
std::string heatmap(const std::string& title, const Tensor& matrix);

}  // namespace sdlpgc::plot
