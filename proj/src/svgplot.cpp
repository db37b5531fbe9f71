#include "gridnewton/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace gridnewton {

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::vector<PlotSeries>& series, bool log_y) {
  std::size_t n_points = 0;
  for (const auto& s : series) n_points += s.y.size();
  if (n_points == 0)
    throw std::invalid_argument("nothing to plot: all series are empty");

  const double W = 840, H = 520;
  const double ml = 70, mr = 160, mt = 50, mb = 50;
  const double pw = W - ml - mr, ph = H - mt - mb;

  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -std::numeric_limits<double>::infinity();
  std::size_t xmax = 1;
  double floor_pos = std::numeric_limits<double>::infinity();
  for (const auto& s : series) {
    xmax = std::max(xmax, s.y.size());
    for (double v : s.y)
      if (v > 0.0) floor_pos = std::min(floor_pos, v);
  }
  if (!std::isfinite(floor_pos)) floor_pos = 1e-16;
  auto tf = [&](double v) {
    if (!log_y) return v;
    return std::log10(std::max(v, floor_pos));
  };
  for (const auto& s : series)
    for (double v : s.y) {
      const double t = tf(v);
      if (std::isfinite(t)) {
        ymin = std::min(ymin, t);
        ymax = std::max(ymax, t);
      }
    }
  if (!(ymax > ymin)) {
    ymax = ymin + 1.0;
    ymin -= 1.0;
  }

  auto px = [&](double i) {
    return ml + pw * (xmax > 1 ? i / static_cast<double>(xmax - 1) : 0.5);
  };
  auto py = [&](double v) {
    return mt + ph * (1.0 - (tf(v) - ymin) / (ymax - ymin));
  };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b"};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" "
                "height=\"%g\" viewBox=\"0 0 %g %g\" font-family=\"sans-serif\""
                ">\n<rect width=\"%g\" height=\"%g\" fill=\"white\"/>\n",
                W, H, W, H, W, H);
  out << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"28\" font-size=\"16\" "
                "text-anchor=\"middle\">%s</text>\n",
                ml + pw / 2, title.c_str());
  out << buf;
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" "
                "fill=\"none\" stroke=\"#444\"/>\n",
                ml, mt, pw, ph);
  out << buf;

  // Horizontal gridlines: decades when log scale, five even steps otherwise.
  if (log_y) {
    for (int e = static_cast<int>(std::floor(ymin));
         e <= static_cast<int>(std::ceil(ymax)); ++e) {
      const double y = mt + ph * (1.0 - (e - ymin) / (ymax - ymin));
      if (y < mt - 1 || y > mt + ph + 1) continue;
      std::snprintf(buf, sizeof buf,
                    "<line x1=\"%g\" y1=\"%.2f\" x2=\"%g\" y2=\"%.2f\" "
                    "stroke=\"#ddd\"/>\n<text x=\"%g\" y=\"%.2f\" "
                    "font-size=\"11\" text-anchor=\"end\">1e%d</text>\n",
                    ml, y, ml + pw, y, ml - 6, y + 4, e);
      out << buf;
    }
  } else {
    for (int k = 0; k <= 5; ++k) {
      const double v = ymin + (ymax - ymin) * k / 5.0;
      const double y = mt + ph * (1.0 - static_cast<double>(k) / 5.0);
      std::snprintf(buf, sizeof buf,
                    "<line x1=\"%g\" y1=\"%.2f\" x2=\"%g\" y2=\"%.2f\" "
                    "stroke=\"#ddd\"/>\n<text x=\"%g\" y=\"%.2f\" "
                    "font-size=\"11\" text-anchor=\"end\">%.3g</text>\n",
                    ml, y, ml + pw, y, ml - 6, y + 4, v);
      out << buf;
    }
  }
  // A few x ticks.
  const int xticks = std::min<std::size_t>(10, xmax);
  for (int k = 0; k < xticks; ++k) {
    const std::size_t i = xmax <= 1 ? 0 : k * (xmax - 1) / (xticks - 1 ? xticks - 1 : 1);
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.2f\" y=\"%g\" font-size=\"11\" "
                  "text-anchor=\"middle\">%zu</text>\n",
                  px(static_cast<double>(i)), mt + ph + 18, i);
    out << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"%g\" font-size=\"12\" "
                "text-anchor=\"middle\">iteration</text>\n",
                ml + pw / 2, H - 12);
  out << buf;

  int ci = 0;
  for (const auto& s : series) {
    const char* color = colors[ci % 6];
    if (!s.y.empty()) {
      out << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.6\" points=\"";
      for (std::size_t i = 0; i < s.y.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ",
                      px(static_cast<double>(i)), py(s.y[i]));
        out << buf;
      }
      out << "\"/>\n";
    }
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%d\" x2=\"%g\" y2=\"%d\" stroke=\"%s\" "
                  "stroke-width=\"2\"/>\n<text x=\"%g\" y=\"%d\" "
                  "font-size=\"12\">%s</text>\n",
                  W - mr + 10, 60 + 20 * ci, W - mr + 34, 60 + 20 * ci, color,
                  W - mr + 40, 64 + 20 * ci, s.label.c_str());
    out << buf;
    ++ci;
  }
  out << "</svg>\n";
}

}  // namespace gridnewton
