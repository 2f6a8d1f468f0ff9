#include "hamgov/plot.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace hamgov {

namespace {

constexpr double kW = 720.0, kH = 420.0;
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 30.0, kBottom = 50.0;

void require(const std::vector<TelemetryRecord>& log) {
  if (log.empty()) throw std::runtime_error("empty telemetry");
}

// Maps data coordinates into the plot area; y grows upward.
struct Frame {
  double x0, x1, y0, y1;
  double w = kW - kLeft - kRight, h = kH - kTop - kBottom;

  Frame(double xa, double xb, double ya, double yb) : x0(xa), x1(xb), y0(ya), y1(yb) {
    if (!(x1 > x0)) x1 = x0 + 1.0;
    if (!(y1 > y0)) {
      const double pad = std::max(1e-9, std::abs(y0) * 0.1);
      y0 -= pad;
      y1 += pad;
    }
  }
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * w; }
  double py(double y) const { return kTop + (1.0 - (y - y0) / (y1 - y0)) * h; }
};

std::string header(const std::string& title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"18\" font-size=\"14\">{3}</text>\n",
      kW, kH, kLeft, title);
}

std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  std::string s = fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", kLeft, kTop, f.w, f.h);
  for (int i = 0; i <= 5; ++i) {
    const double x = f.x0 + (f.x1 - f.x0) * i / 5.0;
    const double y = f.y0 + (f.y1 - f.y0) * i / 5.0;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.3g}</text>\n", f.px(x),
                     kTop + f.h + 16, x);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", kLeft - 6, f.py(y) + 4,
                     y);
  }
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", kLeft + f.w / 2,
                   kH - 12, xlabel);
  s += fmt::format(
      "<text x=\"14\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1f})\">{}</text>\n",
      kTop + f.h / 2, kTop + f.h / 2, ylabel);
  return s;
}

std::string polyline(const Frame& f, const std::vector<double>& x, const std::vector<double>& y,
                     const std::string& color, const std::string& extra = "") {
  std::string pts;
  for (std::size_t i = 0; i < x.size(); ++i) pts += fmt::format("{:.2f},{:.2f} ", f.px(x[i]), f.py(y[i]));
  return fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" {}/>\n", pts, color,
                     extra);
}

std::string legend(int row, const std::string& color, const std::string& label) {
  const double y = kTop + 14 + 16 * row;
  return fmt::format(
      "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>"
      "<text x=\"{4}\" y=\"{5}\">{6}</text>\n",
      kW - kRight - 150, y, kW - kRight - 130, color, kW - kRight - 125, y + 4, label);
}

std::pair<double, double> range(std::initializer_list<const std::vector<double>*> series) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* v : series) {
    for (double x : *v) {
      if (!std::isfinite(x)) continue;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  return {lo, hi};
}

}  // namespace

std::string margin_svg(const std::vector<TelemetryRecord>& log, double kp) {
  require(log);
  std::vector<double> t, de, hd;
  for (const auto& r : log) {
    t.push_back(r.t);
    de.push_back(r.delta_e);
    hd.push_back(2.0 / kp * r.h_d);
  }
  const auto [lo, hi] = range({&de, &hd});
  const Frame f(t.front(), t.back(), std::min(0.0, lo), hi);
  const auto imin = static_cast<std::size_t>(std::min_element(de.begin(), de.end()) - de.begin());

  std::string s = header("safety margin");
  s += axes(f, "t [s]", "energy [m^2]");
  s += fmt::format("<line x1=\"{0}\" y1=\"{1:.2f}\" x2=\"{2}\" y2=\"{1:.2f}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n",
                   kLeft, f.py(0.0), kLeft + f.w);
  s += polyline(f, t, de, "#1f77b4");
  s += polyline(f, t, hd, "#d62728");
  s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"4\" fill=\"none\" stroke=\"black\"/>\n", f.px(t[imin]),
                   f.py(de[imin]));
  s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">min {:.3g} at t={:.2f}</text>\n", f.px(t[imin]) + 6,
                   f.py(de[imin]) - 6, de[imin], t[imin]);
  s += legend(0, "#1f77b4", "Delta E");
  s += legend(1, "#d62728", "(2/kp) H_d");
  return s + "</svg>\n";
}

std::string distance_svg(const std::vector<TelemetryRecord>& log) {
  require(log);
  std::vector<double> t, d, db;
  for (const auto& r : log) {
    t.push_back(r.t);
    d.push_back(r.d_true);
    db.push_back(r.d_bar);
  }
  const auto [lo, hi] = range({&d, &db});
  const Frame f(t.front(), t.back(), std::min(0.0, lo), hi);
  std::string s = header("clearance");
  s += axes(f, "t [s]", "distance [m]");
  s += polyline(f, t, d, "#1f77b4");
  s += polyline(f, t, db, "#2ca02c", "stroke-dasharray=\"5 3\"");
  s += legend(0, "#1f77b4", "d(p, O)");
  s += legend(1, "#2ca02c", "sensed at g");
  return s + "</svg>\n";
}

std::string trajectory_svg(const std::vector<TelemetryRecord>& log, const World& world,
                           const std::vector<Vec3>& path) {
  require(log);
  // equal scale on both axes
  const double sx = world.hi.x() - world.lo.x(), sy = world.hi.y() - world.lo.y();
  const double avail_w = kW - kLeft - kRight, avail_h = kH - kTop - kBottom;
  const double scale = std::min(avail_w / sx, avail_h / sy);
  Frame f(world.lo.x(), world.hi.x(), world.lo.y(), world.hi.y());
  f.w = sx * scale;
  f.h = sy * scale;

  std::string s = header("top view");
  s += axes(f, "x [m]", "y [m]");
  for (const Box& b : world.obstacles.boxes()) {
    s += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"#999\" fill-opacity=\"0.6\"/>\n",
                     f.px(b.lo.x()), f.py(b.hi.y()), (b.hi.x() - b.lo.x()) * scale, (b.hi.y() - b.lo.y()) * scale);
  }
  for (const Sphere& c : world.obstacles.spheres()) {
    s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"{:.2f}\" fill=\"#999\" fill-opacity=\"0.6\"/>\n",
                     f.px(c.center.x()), f.py(c.center.y()), c.radius * scale);
  }
  std::vector<double> x, y;
  if (!path.empty()) {
    for (const Vec3& p : path) {
      x.push_back(p.x());
      y.push_back(p.y());
    }
    s += polyline(f, x, y, "#ff7f0e", "stroke-dasharray=\"6 3\"");
  }
  x.clear();
  y.clear();
  std::vector<double> gx, gy;
  for (const auto& r : log) {
    x.push_back(r.p.x());
    y.push_back(r.p.y());
    gx.push_back(r.g.x());
    gy.push_back(r.g.y());
  }
  s += polyline(f, gx, gy, "#2ca02c");
  s += polyline(f, x, y, "#1f77b4");
  s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"4\" fill=\"#1f77b4\"/>\n", f.px(x.front()), f.py(y.front()));
  s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"4\" fill=\"none\" stroke=\"#1f77b4\"/>\n", f.px(x.back()),
                   f.py(y.back()));
  s += legend(0, "#1f77b4", "vehicle");
  s += legend(1, "#2ca02c", "governor");
  if (!path.empty()) s += legend(2, "#ff7f0e", "path");
  return s + "</svg>\n";
}

std::vector<std::string> write_plots(const std::string& dir, const std::vector<TelemetryRecord>& log, double kp,
                                     const World& world, const std::vector<Vec3>& path) {
  require(log);
  std::filesystem::create_directories(dir);
  const std::vector<std::pair<std::string, std::string>> files{
      {"margin.svg", margin_svg(log, kp)},
      {"distance.svg", distance_svg(log)},
      {"trajectory.svg", trajectory_svg(log, world, path)}};
  std::vector<std::string> out;
  for (const auto& [name, body] : files) {
    const std::string p = (std::filesystem::path(dir) / name).string();
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p);
    f << body;
    out.push_back(p);
  }
  return out;
}

}  // namespace hamgov
