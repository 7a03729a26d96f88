#include "pxl/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace pxl {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel,
                      const std::vector<ChartSeries>& series) {
  const double W = 720, H = 440;
  const double left = 70, right = 160, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (!any) {
        xmin = xmax = x;
        ymin = ymax = y;
        any = true;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ofstream f(path);
  PXL_CHECK(f.good(), Error, "cannot write chart '", path, "'");
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
    << "' font-family='sans-serif' font-size='12'>\n";
  f << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n";
  f << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
    << "</text>\n";

  // axes and ticks
  f << "<line x1='" << left << "' y1='" << top + ph << "' x2='" << left + pw << "' y2='"
    << top + ph << "' stroke='black'/>\n";
  f << "<line x1='" << left << "' y1='" << top << "' x2='" << left << "' y2='" << top + ph
    << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    f << "<line x1='" << px(xv) << "' y1='" << top + ph << "' x2='" << px(xv) << "' y2='"
      << top + ph + 4 << "' stroke='black'/>\n";
    f << "<text x='" << px(xv) << "' y='" << top + ph + 18 << "' text-anchor='middle'>"
      << fmt(xv) << "</text>\n";
    f << "<line x1='" << left - 4 << "' y1='" << py(yv) << "' x2='" << left << "' y2='" << py(yv)
      << "' stroke='black'/>\n";
    f << "<text x='" << left - 8 << "' y='" << py(yv) + 4 << "' text-anchor='end'>" << fmt(yv)
      << "</text>\n";
  }
  f << "<text x='" << left + pw / 2 << "' y='" << H - 10 << "' text-anchor='middle'>" << xlabel
    << "</text>\n";
  f << "<text x='18' y='" << top + ph / 2 << "' text-anchor='middle' transform='rotate(-90 18 "
    << top + ph / 2 << ")'>" << ylabel << "</text>\n";

  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof kPalette / sizeof *kPalette)];
    f << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (const auto& [x, y] : series[s].points)
      if (std::isfinite(x) && std::isfinite(y)) f << px(x) << ',' << py(y) << ' ';
    f << "'/>\n";
    const double ly = top + 16 + 18 * double(s);
    f << "<line x1='" << left + pw + 10 << "' y1='" << ly << "' x2='" << left + pw + 30
      << "' y2='" << ly << "' stroke='" << color << "' stroke-width='2'/>\n";
    f << "<text x='" << left + pw + 36 << "' y='" << ly + 4 << "'>" << series[s].label
      << "</text>\n";
  }
  f << "</svg>\n";
}

}  // namespace pxl
