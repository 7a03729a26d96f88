#pragma once

#include <string>
#include <vector>

#include "pxl/common.hpp"

namespace pxl {

struct ChartSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

// Minimal SVG line chart: axes, ticks, legend, one polyline per series.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel,
                      const std::vector<ChartSeries>& series);

}  // namespace pxl
