#pragma once

// Manufactured solutions for the coupled system
//   -div[(I + m (x) m) grad p] = S,
//   dt m - D^2 Lap m - E^2 (m . grad p) grad p + |m|^{2(gamma-1)} m = f,
// with p = 0 and m = 0 on the boundary of the unit square.

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "hcns/conductance.hpp"
#include "hcns/series.hpp"

namespace hcns {

using Vec3 = std::array<double, 3>;

struct ManufacturedCase {
  std::string name;
  int dim = 2;
  std::function<double(const Point&, double)> p_exact;
  std::function<Vec3(const Point&, double)> m_exact;
  std::function<double(const Point&, double)> source;
  std::function<Vec3(const Point&, double)> forcing;
};

inline std::vector<std::string> manufactured_names() { return {"zero", "trig2d"}; }

/// Registry lookup; the forcing depends on (D, E, gamma).
inline ManufacturedCase manufactured_case(const std::string& name, const StepParams& prm) {
  ManufacturedCase c;
  c.name = name;
  if (name == "zero") {
    c.p_exact = [](const Point&, double) { return 0.0; };
    c.m_exact = [](const Point&, double) { return Vec3{}; };
    c.source = c.p_exact;
    c.forcing = c.m_exact;
    return c;
  }
  if (name == "trig2d") {
    // phi = sin(pi x) sin(pi y); p* = phi e^{-t}; m* = phi e^{-t} (1, 1).
    // Pressure: (m . grad p) m = e^{-3t} phi^2 (phi_x + phi_y)(1, 1), whose divergence is
    //   e^{-3t} [2 phi (phi_x + phi_y)^2 + phi^2 (phi_xx + 2 phi_xy + phi_yy)],
    // and -Lap p* = 2 pi^2 p*, so S = 2 pi^2 e^{-t} phi - e^{-3t}[...].
    // Conductance: dt m* = -m*, -D^2 Lap m* = 2 pi^2 D^2 m*,
    //   (m . grad p) grad p = e^{-3t} phi (phi_x + phi_y) grad phi, hence
    //   f = -m* + 2 pi^2 D^2 m* - E^2 e^{-3t} phi (phi_x + phi_y) grad phi + |m*|^{2(gamma-1)} m*.
    using std::numbers::pi;
    struct Phi {
      double v, x, y, xx, xy, yy;
    };
    auto phi = [](const Point& q) {
      const double sx = std::sin(pi * q[0]), sy = std::sin(pi * q[1]);
      const double cx = std::cos(pi * q[0]), cy = std::cos(pi * q[1]);
      return Phi{sx * sy, pi * cx * sy, pi * sx * cy, -pi * pi * sx * sy, pi * pi * cx * cy, -pi * pi * sx * sy};
    };
    const double d2 = prm.D * prm.D, e2 = prm.E * prm.E, gamma = prm.gamma;
    c.p_exact = [phi](const Point& q, double t) { return phi(q).v * std::exp(-t); };
    c.m_exact = [phi](const Point& q, double t) {
      const double v = phi(q).v * std::exp(-t);
      return Vec3{v, v, 0.0};
    };
    c.source = [phi](const Point& q, double t) {
      const Phi f = phi(q);
      const double g = f.x + f.y;
      return 2.0 * pi * pi * std::exp(-t) * f.v -
             std::exp(-3.0 * t) * (2.0 * f.v * g * g + f.v * f.v * (f.xx + 2.0 * f.xy + f.yy));
    };
    c.forcing = [phi, d2, e2, gamma](const Point& q, double t) {
      const Phi f = phi(q);
      const double m = f.v * std::exp(-t);
      const double mag = std::sqrt(2.0) * std::abs(m);
      const double metabolic = (gamma == 1.0 || mag > 0.0) ? std::pow(mag, 2.0 * (gamma - 1.0)) * m : 0.0;
      const double base = -m + 2.0 * pi * pi * d2 * m + metabolic;
      const double coupling = e2 * std::exp(-3.0 * t) * f.v * (f.x + f.y);
      return Vec3{base - coupling * f.x, base - coupling * f.y, 0.0};
    };
    return c;
  }
  throw ConfigError("unknown manufactured case '" + name + "'");
}

struct ManufacturedRun {
  VectorField m;
  ScalarField p;
  double err_p = 0.0;  // L2 error against p* at T
  double err_m = 0.0;  // L2 error against m* at T
  int cfl_warnings = 0;
  SpaceTimeSeries series;  // every step, when requested
};

/// Integrates the forced system from the exact initial data up to T in `steps` steps.
inline ManufacturedRun run_manufactured(const ManufacturedCase& mc, int n_cells, const StepParams& prm_in, double T,
                                        int steps, double tol = 1e-12, bool record_series = false) {
  const GridSpec g = GridSpec::uniform(mc.dim, n_cells);
  StepParams prm = prm_in;
  prm.dt = T / steps;
  prm.validate();
  auto source_at = [&](double t) { return ScalarField::sample(g, [&](const Point& x) { return mc.source(x, t); }); };
  ManufacturedRun r;
  r.m = VectorField::sample(g, [&](const Point& x) { return mc.m_exact(x, 0.0); });
  r.p = solve_initial_pressure(r.m, source_at(0.0), tol);
  if (record_series) {
    r.series = SpaceTimeSeries(g, T, T / steps);
    r.series.push_back({0.0, r.p, r.m});
  }
  for (int s = 0; s < steps; ++s) {
    const double t1 = (s + 1) * prm.dt;
    const VectorField f = VectorField::sample(g, [&](const Point& x) { return mc.forcing(x, t1); });
    auto out = advance_conductance(r.m, r.p, prm, tol, &f);
    r.cfl_warnings += out.cfl_warning ? 1 : 0;
    r.p = solve_pressure(out.m, source_at(t1), tol, &r.p).p;
    r.m = std::move(out.m);
    if (record_series) r.series.push_back({t1, r.p, r.m});
  }
  const auto pe = ScalarField::sample(g, [&](const Point& x) { return mc.p_exact(x, T); });
  const auto me = VectorField::sample(g, [&](const Point& x) { return mc.m_exact(x, T); });
  double ep = 0.0, em = 0.0;
  for (std::size_t k = 0; k < pe.size(); ++k) ep += std::pow(r.p[k] - pe[k], 2);
  for (std::size_t k = 0; k < me.values.size(); ++k) em += std::pow(r.m.values[k] - me.values[k], 2);
  r.err_p = std::sqrt(ep * g.cell_volume());
  r.err_m = std::sqrt(em * g.cell_volume());
  return r;
}

struct MmsLevel {
  int cells = 0;
  double h = 0.0;
  double dt = 0.0;
  double err_p = 0.0;
  double err_m = 0.0;
  double diff_m = 0.0;  // temporal study: |m_dt - m_{dt/2}|
};

struct MmsStudy {
  std::string name;
  std::vector<MmsLevel> spatial;   // h halves, dt quarters
  std::vector<MmsLevel> temporal;  // fixed grid, dt halves
  double spatial_order_p = 0.0;    // least-squares slope of log err_p against log h
  double temporal_order_m = 0.0;   // log2 of successive-difference ratios, finest pair
  bool errors_decrease = true;
  bool exact = false;  // every error and difference is zero; orders undefined
  static constexpr double kSpatialLo = 1.8, kSpatialHi = 2.2, kTemporalLo = 0.7, kTemporalHi = 1.3;
  bool spatial_ok() const { return exact || (spatial_order_p >= kSpatialLo && spatial_order_p <= kSpatialHi); }
  bool temporal_ok() const { return exact || (temporal_order_m >= kTemporalLo && temporal_order_m <= kTemporalHi); }
  bool pass() const { return spatial_ok() && temporal_ok() && errors_decrease; }
};

struct MmsSettings {
  StepParams params{1.0, 1.0, 1.0, 1e-3, 1e-12};
  double T = 0.1;
  int coarse_cells = 16;
  int coarse_steps = 8;       // spatial study; steps x4 per level so dt ~ h^2
  int temporal_cells = 32;
  int temporal_steps = 5;     // temporal study; steps x2 per level
  double tol = 1e-12;
};

/// Spatial study (h, dt ~ h^2) and temporal study (fixed h, dt halving) over `levels` levels.
inline MmsStudy mms_study(const std::string& name, int levels = 3, const MmsSettings& set = {}) {
  if (levels < 3) throw ConfigError("a convergence study needs at least 3 levels");
  const auto mc = manufactured_case(name, set.params);
  MmsStudy st;
  st.name = name;
  for (int k = 0; k < levels; ++k) {
    const int cells = set.coarse_cells << k;
    const int steps = set.coarse_steps << (2 * k);
    const auto r = run_manufactured(mc, cells, set.params, set.T, steps, set.tol);
    st.spatial.push_back({cells, 1.0 / cells, set.T / steps, r.err_p, r.err_m, 0.0});
  }
  std::vector<VectorField> finals;
  for (int k = 0; k < levels; ++k) {
    const int steps = set.temporal_steps << k;
    const auto r = run_manufactured(mc, set.temporal_cells, set.params, set.T, steps, set.tol);
    st.temporal.push_back({set.temporal_cells, 1.0 / set.temporal_cells, set.T / steps, r.err_p, r.err_m, 0.0});
    finals.push_back(r.m);
  }
  for (int k = 1; k < levels; ++k) {
    double d = 0.0;
    for (std::size_t j = 0; j < finals[k].values.size(); ++j)
      d += std::pow(finals[k].values[j] - finals[k - 1].values[j], 2);
    st.temporal[k].diff_m = std::sqrt(d * finals[k].grid.cell_volume());
  }
  st.exact = true;
  for (const auto& l : st.spatial) st.exact = st.exact && l.err_p == 0.0 && l.err_m == 0.0;
  for (const auto& l : st.temporal) st.exact = st.exact && l.err_m == 0.0 && l.diff_m == 0.0;
  if (st.exact) {
    st.spatial_order_p = st.temporal_order_m = std::numeric_limits<double>::quiet_NaN();
    return st;
  }
  // Least-squares slope of log err_p against log h.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& l : st.spatial) {
    const double x = std::log(l.h), y = std::log(std::max(l.err_p, 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(st.spatial.size());
  st.spatial_order_p = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double d1 = st.temporal[levels - 2].diff_m, d2 = st.temporal[levels - 1].diff_m;
  st.temporal_order_m = d2 > 0.0 ? std::log2(d1 / d2) : 0.0;
  for (int k = 1; k < levels; ++k) {
    st.errors_decrease = st.errors_decrease && st.spatial[k].err_p < st.spatial[k - 1].err_p &&
                         st.spatial[k].err_m < st.spatial[k - 1].err_m;
  }
  return st;
}

}  // namespace hcns
