#include "semiprice/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace semiprice::svg {

namespace {

struct Curve {
  std::string label;
  std::vector<double> x, y, band_lo, band_hi;
  double benchmark = -1.0;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string num_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

//! Round tick spacing to 1/2/5 times a power of ten.
double nice_step(double span, int target) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  if (r < 1.5) return mag;
  if (r < 3.5) return 2.0 * mag;
  if (r < 7.5) return 5.0 * mag;
  return 10.0 * mag;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                         "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

std::string render_regret_plot(const nlohmann::json& summary) {
  if (!summary.is_object() || !summary.contains("policies"))
    throw std::runtime_error("summary document has no policies section");

  std::vector<Curve> curves;
  for (const auto& p : summary.at("policies")) {
    Curve c;
    c.label = p.value("label", std::string("?"));
    if (p.contains("benchmark_slope") && p.at("benchmark_slope").is_number())
      c.benchmark = p.at("benchmark_slope").get<double>();
    if (!p.contains("points")) continue;
    double t1 = 0.0;
    bool first = true;
    for (const auto& pt : p.at("points")) {
      if (!pt.contains("reg_tilde") || !pt.at("reg_tilde").is_number())
        continue;
      const double T = pt.at("T").get<double>();
      if (first) {
        t1 = T;
        first = false;
      }
      const double x = std::log(T) - std::log(t1);
      const double y = pt.at("reg_tilde").get<double>();
      const double mean = pt.value("mean", 0.0);
      const double se = pt.value("stderr", 0.0);
      double hi = y, lo = y;
      if (mean > 0.0 && se >= 0.0) {
        hi = y + std::log((mean + se) / mean);
        if (mean - se > 0.0) lo = y + std::log((mean - se) / mean);
      }
      c.x.push_back(x);
      c.y.push_back(y);
      c.band_lo.push_back(lo);
      c.band_hi.push_back(hi);
    }
    if (!c.x.empty()) curves.push_back(std::move(c));
  }
  if (curves.empty())
    throw std::runtime_error("summary holds no plottable policy");

  double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;
  bool init = false;
  for (const Curve& c : curves) {
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      if (!init) {
        xmin = xmax = c.x[i];
        ymin = c.band_lo[i];
        ymax = c.band_hi[i];
        init = true;
      }
      xmin = std::min(xmin, c.x[i]);
      xmax = std::max(xmax, c.x[i]);
      ymin = std::min(ymin, c.band_lo[i]);
      ymax = std::max(ymax, c.band_hi[i]);
    }
  }
  for (const Curve& c : curves)
    if (c.benchmark > 0.0) ymax = std::max(ymax, c.benchmark * xmax);
  if (xmax - xmin < 1e-12) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double xpad = 0.04 * (xmax - xmin);
  const double ypad = 0.08 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;

  const double w = 760, h = 520;
  const double ml = 70, mr = 20, mt = 24, mb = 52;
  auto sx = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
  };
  auto sy = [&](double y) {
    return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);
  };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
    << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  o << "<rect width=\"" << w << "\" height=\"" << h
    << "\" fill=\"#ffffff\"/>\n";

  // Axes and ticks.
  o << "<g stroke=\"#333333\" stroke-width=\"1\">\n";
  o << "<line x1=\"" << num(ml) << "\" y1=\"" << num(h - mb) << "\" x2=\""
    << num(w - mr) << "\" y2=\"" << num(h - mb) << "\"/>\n";
  o << "<line x1=\"" << num(ml) << "\" y1=\"" << num(mt) << "\" x2=\""
    << num(ml) << "\" y2=\"" << num(h - mb) << "\"/>\n";
  o << "</g>\n";
  o << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">\n";
  const double xstep = nice_step(xmax - xmin, 6);
  for (double t = std::ceil(xmin / xstep) * xstep; t <= xmax + 1e-12;
       t += xstep) {
    const double px = sx(t);
    o << "<line x1=\"" << num(px) << "\" y1=\"" << num(h - mb) << "\" x2=\""
      << num(px) << "\" y2=\"" << num(h - mb + 4)
      << "\" stroke=\"#333333\"/>\n";
    o << "<text x=\"" << num(px) << "\" y=\"" << num(h - mb + 16)
      << "\" text-anchor=\"middle\">" << num_g(t) << "</text>\n";
  }
  const double ystep = nice_step(ymax - ymin, 6);
  for (double t = std::ceil(ymin / ystep) * ystep; t <= ymax + 1e-12;
       t += ystep) {
    const double py = sy(t);
    o << "<line x1=\"" << num(ml - 4) << "\" y1=\"" << num(py) << "\" x2=\""
      << num(ml) << "\" y2=\"" << num(py) << "\" stroke=\"#333333\"/>\n";
    o << "<text x=\"" << num(ml - 7) << "\" y=\"" << num(py + 4)
      << "\" text-anchor=\"end\">" << num_g(t) << "</text>\n";
  }
  o << "<text x=\"" << num(ml + (w - ml - mr) / 2) << "\" y=\""
    << num(h - 14)
    << "\" text-anchor=\"middle\">log T - log T1</text>\n";
  o << "<text x=\"14\" y=\"" << num(mt + (h - mt - mb) / 2)
    << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << num(mt + (h - mt - mb) / 2)
    << ")\">transformed cumulative regret</text>\n";
  o << "</g>\n";

  // Benchmark lines through the origin, one per distinct slope.
  std::vector<double> seen;
  for (const Curve& c : curves) {
    if (!(c.benchmark > 0.0)) continue;
    bool dup = false;
    for (double s : seen)
      if (std::abs(s - c.benchmark) < 1e-12) dup = true;
    if (dup) continue;
    seen.push_back(c.benchmark);
    const double x0 = std::max(xmin, 0.0);
    o << "<line x1=\"" << num(sx(x0)) << "\" y1=\"" << num(sy(c.benchmark * x0))
      << "\" x2=\"" << num(sx(xmax)) << "\" y2=\""
      << num(sy(c.benchmark * xmax))
      << "\" stroke=\"#888888\" stroke-dasharray=\"6 4\""
         " stroke-width=\"1\"/>\n";
    o << "<text x=\"" << num(sx(xmax) - 4) << "\" y=\""
      << num(sy(c.benchmark * xmax) - 5)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\""
         " font-size=\"11\" fill=\"#888888\">slope "
      << num_g(c.benchmark) << "</text>\n";
  }

  // Bands, lines, points, legend.
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const Curve& c = curves[ci];
    const char* col = kPalette[ci % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (c.x.size() >= 2) {
      std::ostringstream band;
      for (std::size_t i = 0; i < c.x.size(); ++i)
        band << (i ? " " : "") << num(sx(c.x[i])) << ','
             << num(sy(c.band_hi[i]));
      for (std::size_t i = c.x.size(); i-- > 0;)
        band << ' ' << num(sx(c.x[i])) << ',' << num(sy(c.band_lo[i]));
      o << "<polygon points=\"" << band.str() << "\" fill=\"" << col
        << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
      std::ostringstream line;
      for (std::size_t i = 0; i < c.x.size(); ++i)
        line << (i ? " " : "") << num(sx(c.x[i])) << ',' << num(sy(c.y[i]));
      o << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\""
        << col << "\" stroke-width=\"1.8\"/>\n";
    }
    for (std::size_t i = 0; i < c.x.size(); ++i)
      o << "<circle cx=\"" << num(sx(c.x[i])) << "\" cy=\"" << num(sy(c.y[i]))
        << "\" r=\"2.6\" fill=\"" << col << "\"/>\n";
  }
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const Curve& c = curves[ci];
    const char* col = kPalette[ci % (sizeof(kPalette) / sizeof(kPalette[0]))];
    const double ly = mt + 8 + 16 * static_cast<double>(ci);
    o << "<line x1=\"" << num(ml + 10) << "\" y1=\"" << num(ly) << "\" x2=\""
      << num(ml + 34) << "\" y2=\"" << num(ly) << "\" stroke=\"" << col
      << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(ml + 40) << "\" y=\"" << num(ly + 4)
      << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#333333\">"
      << c.label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace semiprice::svg
