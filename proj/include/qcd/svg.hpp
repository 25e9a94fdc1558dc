#pragma once

#include <string>
#include <utility>
#include <vector>

namespace qcd {

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y); non-finite points are dropped
};

// Minimal self-contained SVG line chart (fixed palette, optional log axes).
// Output bytes are a pure function of the inputs.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<PlotSeries>& series,
                           bool log_x = false, bool log_y = false);

}  // namespace qcd
