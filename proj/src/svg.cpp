#include "qcd/svg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "qcd/csv.hpp"

namespace qcd {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string px(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 2);
  return std::string(buf, res.ptr);
}

// Tick label: short decimal, falling back to scientific for extreme values.
std::string tick_label(double v) {
  if (v == 0.0) return "0";
  const double a = std::fabs(v);
  char buf[32];
  const auto res = (a >= 1e5 || a < 1e-3)
                       ? std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::scientific, 2)
                       : std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 5);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<PlotSeries>& series,
                           bool log_x, bool log_y) {
  const double width = 720, height = 480;
  const double ml = 70, mr = 160, mt = 40, mb = 55;  // right margin holds the legend
  const double pw = width - ml - mr, ph = height - mt - mb;

  const auto tx = [&](double x) { return log_x ? std::log10(x) : x; };
  const auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  const auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!log_x || x > 0.0) && (!log_y || y > 0.0);
  };

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (!usable(x, y)) continue;
      xmin = std::min(xmin, tx(x));
      xmax = std::max(xmax, tx(x));
      ymin = std::min(ymin, ty(y));
      ymax = std::max(ymax, ty(y));
    }
  const bool empty = !(xmin <= xmax);
  if (empty) {
    xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  }
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const auto sx = [&](double x) { return ml + (tx(x) - xmin) / (xmax - xmin) * pw; };
  const auto sy = [&](double y) { return mt + ph - (ty(y) - ymin) / (ymax - ymin) * ph; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(width) + "\" height=\"" +
         px(height) + "\" viewBox=\"0 0 " + px(width) + " " + px(height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + px(ml + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" + title + "</text>\n";

  // frame and ticks
  out += "<rect x=\"" + px(ml) + "\" y=\"" + px(mt) + "\" width=\"" + px(pw) + "\" height=\"" +
         px(ph) + "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    const double gx = ml + pw * i / 4.0;
    const double gy = mt + ph - ph * i / 4.0;
    out += "<line x1=\"" + px(gx) + "\" y1=\"" + px(mt + ph) + "\" x2=\"" + px(gx) + "\" y2=\"" +
           px(mt + ph + 5) + "\" stroke=\"#333\"/>\n";
    out += "<text x=\"" + px(gx) + "\" y=\"" + px(mt + ph + 20) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           tick_label(log_x ? std::pow(10.0, fx) : fx) + "</text>\n";
    out += "<line x1=\"" + px(ml - 5) + "\" y1=\"" + px(gy) + "\" x2=\"" + px(ml) + "\" y2=\"" +
           px(gy) + "\" stroke=\"#333\"/>\n";
    out += "<text x=\"" + px(ml - 8) + "\" y=\"" + px(gy + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           tick_label(log_y ? std::pow(10.0, fy) : fy) + "</text>\n";
  }
  out += "<text x=\"" + px(ml + pw / 2) + "\" y=\"" + px(height - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + x_label + "</text>\n";
  out += "<text x=\"18\" y=\"" + px(mt + ph / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 " +
         px(mt + ph / 2) + ")\">" + y_label + "</text>\n";

  if (empty) {
    out += "<text x=\"" + px(ml + pw / 2) + "\" y=\"" + px(mt + ph / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" fill=\"#777\">no data</text>\n";
  }

  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::string pts;
    for (const auto& [x, y] : series[si].points) {
      if (!usable(x, y)) continue;
      if (!pts.empty()) pts += ' ';
      pts += px(sx(x)) + "," + px(sy(y));
    }
    if (!pts.empty())
      out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + std::string(color) +
             "\" stroke-width=\"1.8\"/>\n";
    const double ly = mt + 18 + 18 * static_cast<double>(si);
    out += "<line x1=\"" + px(ml + pw + 12) + "\" y1=\"" + px(ly - 4) + "\" x2=\"" +
           px(ml + pw + 34) + "\" y2=\"" + px(ly - 4) + "\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + px(ml + pw + 40) + "\" y=\"" + px(ly) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + series[si].name + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace qcd
