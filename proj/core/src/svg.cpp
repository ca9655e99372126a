// Self-contained SVG rendering of the W2-vs-h curves: one log-log panel per
// lambda value, one polyline per scheme.
#include "diffbench/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

namespace diffbench {

namespace {

struct Series {
  std::string scheme;
  std::vector<std::pair<double, double>> points;  // (h, w2)
};

const char* scheme_color(const std::string& scheme) {
  if (scheme == "EM") return "#1f77b4";
  if (scheme == "EI") return "#ff7f0e";
  if (scheme == "REM") return "#2ca02c";
  if (scheme == "REI") return "#d62728";
  if (scheme == "SO") return "#9467bd";
  return "#7f7f7f";
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_w2_svg(const std::vector<ResultRow>& rows, const std::string& path) {
  // Group rows into panels keyed by lambda (a single panel for the order
  // study, where lambda is 0).
  std::map<double, std::map<std::string, Series>> panels;
  for (const ResultRow& r : rows) {
    if (!std::isfinite(r.w2_dim1) || r.w2_dim1 <= 0.0) continue;
    Series& s = panels[r.lambda][r.scheme];
    s.scheme = r.scheme;
    s.points.emplace_back(r.h, r.w2_dim1);
  }

  const double panel_w = 340, panel_h = 300;
  const double margin_l = 58, margin_r = 16, margin_t = 34, margin_b = 46;
  const double cell_w = panel_w + margin_l + margin_r;
  const double cell_h = panel_h + margin_t + margin_b;
  const int n_panels = std::max<int>(1, static_cast<int>(panels.size()));
  const double total_w = cell_w * n_panels;
  const double total_h = cell_h;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_w2_svg: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total_w
      << "\" height=\"" << total_h << "\" viewBox=\"0 0 " << total_w << " "
      << total_h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<style>text{font-family:sans-serif;font-size:12px;}"
         ".t{font-size:14px;font-weight:bold;}</style>\n";

  int panel_idx = 0;
  for (const auto& [lambda, series_map] : panels) {
    const double x0 = panel_idx * cell_w + margin_l;
    const double y0 = margin_t;

    double hmin = 1e300, hmax = -1e300, emin = 1e300, emax = -1e300;
    for (const auto& [name, s] : series_map) {
      for (const auto& [h, e] : s.points) {
        hmin = std::min(hmin, h);
        hmax = std::max(hmax, h);
        emin = std::min(emin, e);
        emax = std::max(emax, e);
      }
    }
    if (!(hmax > 0) || !(emax > 0)) {
      ++panel_idx;
      continue;
    }
    const double lx0 = std::log10(hmin), lx1 = std::log10(hmax);
    double ly0 = std::log10(emin), ly1 = std::log10(emax);
    if (ly1 - ly0 < 0.5) {  // keep some vertical breathing room
      const double mid = 0.5 * (ly0 + ly1);
      ly0 = mid - 0.25;
      ly1 = mid + 0.25;
    }
    const double pad_x = 0.04 * (lx1 - lx0 + 1e-12);
    const double pad_y = 0.06 * (ly1 - ly0);
    auto sx = [&](double h) {
      return x0 + (std::log10(h) - lx0 + pad_x) / (lx1 - lx0 + 2 * pad_x) *
                      panel_w;
    };
    auto sy = [&](double e) {
      return y0 + panel_h - (std::log10(e) - ly0 + pad_y) /
                                (ly1 - ly0 + 2 * pad_y) * panel_h;
    };

    out << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << panel_w
        << "\" height=\"" << panel_h
        << "\" fill=\"none\" stroke=\"#404040\"/>\n";
    const std::string title =
        lambda > 0.0 ? ("lambda = " + fmt(lambda)) : std::string("order study");
    out << "<text class=\"t\" x=\"" << x0 + panel_w / 2 << "\" y=\""
        << y0 - 12 << "\" text-anchor=\"middle\">" << title << "</text>\n";

    // decade ticks
    for (int p = static_cast<int>(std::floor(lx0)); p <= std::ceil(lx1); ++p) {
      const double h = std::pow(10.0, p);
      if (h < hmin / 1.5 || h > hmax * 1.5) continue;
      out << "<line x1=\"" << sx(h) << "\" y1=\"" << y0 + panel_h
          << "\" x2=\"" << sx(h) << "\" y2=\"" << y0 + panel_h + 5
          << "\" stroke=\"#404040\"/>\n"
          << "<text x=\"" << sx(h) << "\" y=\"" << y0 + panel_h + 18
          << "\" text-anchor=\"middle\">1e" << p << "</text>\n";
    }
    for (int p = static_cast<int>(std::floor(ly0)); p <= std::ceil(ly1); ++p) {
      const double e = std::pow(10.0, p);
      if (std::log10(e) < ly0 - 0.01 || std::log10(e) > ly1 + 0.01) continue;
      out << "<line x1=\"" << x0 - 5 << "\" y1=\"" << sy(e) << "\" x2=\""
          << x0 << "\" y2=\"" << sy(e) << "\" stroke=\"#404040\"/>\n"
          << "<text x=\"" << x0 - 8 << "\" y=\"" << sy(e) + 4
          << "\" text-anchor=\"end\">1e" << p << "</text>\n";
    }
    out << "<text x=\"" << x0 + panel_w / 2 << "\" y=\""
        << y0 + panel_h + 36 << "\" text-anchor=\"middle\">step size h</text>\n"
        << "<text x=\"" << x0 - 44 << "\" y=\"" << y0 + panel_h / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 " << x0 - 44
        << " " << y0 + panel_h / 2 << ")\">W2 (dim 1)</text>\n";

    // h-grid markers for each series point, sorted by h
    int legend_i = 0;
    for (const auto& [name, s] : series_map) {
      auto pts = s.points;
      std::sort(pts.begin(), pts.end());
      out << "<polyline fill=\"none\" stroke=\"" << scheme_color(name)
          << "\" stroke-width=\"1.8\" points=\"";
      for (const auto& [h, e] : pts) out << fmt(sx(h)) << "," << fmt(sy(e)) << " ";
      out << "\"/>\n";
      for (const auto& [h, e] : pts) {
        out << "<circle cx=\"" << fmt(sx(h)) << "\" cy=\"" << fmt(sy(e))
            << "\" r=\"2.6\" fill=\"" << scheme_color(name) << "\"/>\n";
      }
      // legend
      const double lych = y0 + 10 + 16 * legend_i;
      out << "<line x1=\"" << x0 + panel_w - 72 << "\" y1=\"" << lych
          << "\" x2=\"" << x0 + panel_w - 52 << "\" y2=\"" << lych
          << "\" stroke=\"" << scheme_color(name) << "\" stroke-width=\"2\"/>\n"
          << "<text x=\"" << x0 + panel_w - 46 << "\" y=\"" << lych + 4
          << "\">" << name << "</text>\n";
      ++legend_i;
    }
    ++panel_idx;
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write_w2_svg: write failed: " + path);
}

}  // namespace diffbench
