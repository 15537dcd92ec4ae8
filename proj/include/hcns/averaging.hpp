#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "hcns/series.hpp"

namespace hcns {

/// Q_r(z) = B_r(y) x (tau - r^2/2, tau + r^2/2).
struct ParabolicCylinder {
  Point y{};
  double tau = 0.0;
  double r = 0.0;

  double t_begin() const noexcept { return tau - 0.5 * r * r; }
  double t_end() const noexcept { return tau + 0.5 * r * r; }
};

/// Cells whose centers satisfy |x_c - y| < r, in flat order.
inline std::vector<std::size_t> ball_cells(const GridSpec& g, const Point& y, double r) {
  Index lo{0, 0, 0}, hi{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    if (a < g.dim()) {
      const double h = g.spacing(a);
      lo[a] = std::max(0, static_cast<int>(std::floor((y[a] - r) / h - 0.5)));
      hi[a] = std::min(g.cells(a) - 1, static_cast<int>(std::ceil((y[a] + r) / h - 0.5)));
    }
  }
  std::vector<std::size_t> cells;
  const double r2 = r * r;
  Index i{};
  for (i[0] = lo[0]; i[0] <= hi[0]; ++i[0])
    for (i[1] = lo[1]; i[1] <= hi[1]; ++i[1])
      for (i[2] = lo[2]; i[2] <= hi[2]; ++i[2]) {
        const Point x = g.center(i);
        double d2 = 0.0;
        for (int a = 0; a < g.dim(); ++a) d2 += (x[a] - y[a]) * (x[a] - y[a]);
        if (d2 < r2) cells.push_back(g.flat(i));
      }
  return cells;
}

inline bool ball_inside_domain(const GridSpec& g, const Point& y, double r) {
  for (int a = 0; a < g.dim(); ++a) {
    const double tol = 1e-12 * g.extent(a);
    if (y[a] - r < -tol || y[a] + r > g.extent(a) + tol) return false;
  }
  return true;
}

/// Ball cells after checking B_r(y) lies in the domain and is not empty.
inline std::vector<std::size_t> probe_ball(const GridSpec& g, const Point& y, double r) {
  if (!(r > 0.0)) throw DegenerateProbeError("probe radius must be positive");
  if (!ball_inside_domain(g, y, r)) throw DegenerateProbeError("probe ball leaves the domain");
  auto cells = ball_cells(g, y, r);
  if (cells.empty()) throw DegenerateProbeError("probe ball contains no cell centers (radius below cell scale)");
  return cells;
}

/// Arithmetic mean of f over the ball cells.
inline double ball_average(const ScalarField& f, const Point& y, double r) {
  const auto cells = probe_ball(f.grid, y, r);
  double s = 0.0;
  for (auto k : cells) s += f[k];
  return s / static_cast<double>(cells.size());
}

inline std::vector<double> ball_average(const VectorField& f, const Point& y, double r) {
  const auto cells = probe_ball(f.grid, y, r);
  std::vector<double> s(f.components(), 0.0);
  for (int c = 0; c < f.components(); ++c) {
    for (auto k : cells) s[c] += f.at(c, k);
    s[c] /= static_cast<double>(cells.size());
  }
  return s;
}

/// Snapshots falling in a cylinder's time window with normalized trapezoidal weights.
struct CylinderWindow {
  std::vector<std::size_t> snapshots;
  std::vector<double> weights;  // sum to 1
  std::vector<std::size_t> cells;
};

inline CylinderWindow cylinder_window(const SpaceTimeSeries& s, const ParabolicCylinder& q) {
  CylinderWindow w;
  w.cells = probe_ball(s.grid(), q.y, q.r);
  const double tol = 1e-12 * std::max(1.0, s.horizon());
  if (q.t_begin() < -tol || q.t_end() > s.horizon() + tol)
    throw DegenerateProbeError("cylinder time window leaves (0, T)");
  w.snapshots = s.window(q.t_begin(), q.t_end());
  if (w.snapshots.size() < 2)
    throw InsufficientResolutionError("fewer than 2 snapshots in the cylinder window; required cadence <= " +
                                          std::to_string(0.25 * q.r * q.r),
                                      0.25 * q.r * q.r);
  std::vector<double> t;
  for (auto k : w.snapshots) t.push_back(s[k].t);
  w.weights = trapezoid_weights(t);
  const double span = t.back() - t.front();
  for (auto& x : w.weights) x /= span;
  return w;
}

enum class FieldSelector { Pressure, Conductance };

/// Time-weighted trapezoidal average over the window of per-snapshot ball averages.
/// Returns one value for the pressure and N values for the conductance.
inline std::vector<double> cylinder_average(const SpaceTimeSeries& s, const ParabolicCylinder& q, FieldSelector sel) {
  const auto w = cylinder_window(s, q);
  const int comps = sel == FieldSelector::Pressure ? 1 : s.grid().dim();
  const double inv_count = 1.0 / static_cast<double>(w.cells.size());
  std::vector<double> out(comps, 0.0);
  for (std::size_t j = 0; j < w.snapshots.size(); ++j) {
    const Snapshot& snap = s[w.snapshots[j]];
    for (int c = 0; c < comps; ++c) {
      double b = 0.0;
      if (sel == FieldSelector::Pressure)
        for (auto k : w.cells) b += snap.p[k];
      else
        for (auto k : w.cells) b += snap.m.at(c, k);
      out[c] += w.weights[j] * b * inv_count;
    }
  }
  return out;
}

/// Ball region for lq_integral; std::monostate means the whole domain.
struct Ball {
  Point y{};
  double r = 0.0;
};
using Region = std::variant<std::monostate, Ball>;

inline std::vector<std::size_t> region_cells(const GridSpec& g, const Region& region) {
  if (const auto* b = std::get_if<Ball>(&region)) return probe_ball(g, b->y, b->r);
  std::vector<std::size_t> all(g.cell_count());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  return all;
}

namespace detail {

template <class Mag>
double lq_reduce(const GridSpec& g, const Region& region, double q, bool as_norm, Mag&& mag) {
  if (!(q >= 1.0)) throw ConfigError("lq_integral requires q >= 1");
  const auto cells = region_cells(g, region);
  if (std::isinf(q)) {
    double m = 0.0;
    for (auto k : cells) m = std::max(m, mag(k));
    return m;
  }
  double s = 0.0;
  for (auto k : cells) s += std::pow(mag(k), q);
  s *= g.cell_volume();
  return as_norm ? std::pow(s, 1.0 / q) : s;
}

}  // namespace detail

/// sum |f|^q h^N over the region; the q-th root when `as_norm`. q = inf gives max |f|.
inline double lq_integral(const ScalarField& f, const Region& region, double q, bool as_norm = false) {
  require_finite(f, "lq_integral");
  return detail::lq_reduce(f.grid, region, q, as_norm, [&](std::size_t k) { return std::abs(f[k]); });
}

inline double lq_integral(const VectorField& f, const Region& region, double q, bool as_norm = false) {
  require_finite(f, "lq_integral");
  return detail::lq_reduce(f.grid, region, q, as_norm, [&](std::size_t k) { return std::sqrt(f.norm_sq_at(k)); });
}

}  // namespace hcns
