#pragma once

#include <string>
#include <vector>

namespace gridnewton {

struct PlotSeries {
  std::string label;
  std::vector<double> y;  // plotted against its index
};

// Small self-contained SVG line chart. With log_y, non-positive values are
// floored to the smallest positive value present (or 1e-16). Throws
// std::invalid_argument when no series has data.
void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::vector<PlotSeries>& series, bool log_y);

}  // namespace gridnewton
