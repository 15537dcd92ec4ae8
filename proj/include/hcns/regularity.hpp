#pragma once

// Local regularity estimators on a stored space-time series: scaled energies,
// decay probes, Campanato fits, H_eps densities, point classification, blow-up
// rescaling and the frozen-coefficient pressure decomposition.
//
// Time integrals over a cylinder window use the normalized trapezoidal weights
// of the in-window snapshots scaled by the window length r^2.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hcns/averaging.hpp"
#include "hcns/pressure.hpp"
#include "hcns/snapshot_io.hpp"

namespace hcns {

namespace detail {

/// Cylinder window whose snapshots leave no gap (ends included) wider than r^2/4.
inline CylinderWindow resolved_window(const SpaceTimeSeries& s, const ParabolicCylinder& q) {
  auto w = cylinder_window(s, q);
  const double need = 0.25 * q.r * q.r;
  double gap = std::max(s[w.snapshots.front()].t - q.t_begin(), q.t_end() - s[w.snapshots.back()].t);
  for (std::size_t j = 1; j < w.snapshots.size(); ++j)
    gap = std::max(gap, s[w.snapshots[j]].t - s[w.snapshots[j - 1]].t);
  if (gap > need * (1.0 + 1e-9))
    throw InsufficientResolutionError("cylinder window under-resolved: snapshot gap " + std::to_string(gap) +
                                          " exceeds r^2/4 = " + std::to_string(need),
                                      need);
  return w;
}

/// Ball mean of one component, accumulated relative to the first value so constant data is reproduced exactly.
inline double shifted_mean(std::span<const double> v, const std::vector<std::size_t>& cells) {
  const double ref = v[cells.front()];
  double s = 0.0;
  for (auto k : cells) s += v[k] - ref;
  return ref + s / static_cast<double>(cells.size());
}

inline double ipow_r(double r, int n) { return std::pow(r, n); }

}  // namespace detail

/// Default H_eps integrability exponent d: 2N/(N-2) for N = 3, 8 for N = 2, 12 for N = 1.
inline double default_h_eps_exponent(int n) { return n == 3 ? 6.0 : (n == 2 ? 8.0 : 12.0); }

/// Default beta = 0.5 min{2 - N/q, 1}.
inline double default_beta(int n, double q = std::numeric_limits<double>::infinity()) {
  return 0.5 * std::min(2.0 - n / q, 1.0);
}

struct ScaledEnergyReport {
  ParabolicCylinder probe;
  double beta = 0.0;
  std::vector<double> times;   // in-window snapshot times
  std::vector<double> p_mean;  // p_{y,r}(t) at those times
  std::vector<double> m_mean;  // m_{z,r}
  double A_r = 0.0;
  double osc_m = 0.0;
  double E_r = 0.0;
};

/// E_r(z) = r^{-(N+2)} int_Q |m - m_{z,r}|^2 + A_r(z) + r^{2 beta},
/// A_r = r^{-N} max over in-window snapshots of sum_{B_r} (p - p_{y,r}(t))^2 h^N.
inline ScaledEnergyReport scaled_energy(const SpaceTimeSeries& s, const ParabolicCylinder& q, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
  const auto w = detail::resolved_window(s, q);
  const GridSpec& g = s.grid();
  const int n = g.dim();
  const double vol = g.cell_volume();
  ScaledEnergyReport rep;
  rep.probe = q;
  rep.beta = beta;
  double amax = 0.0;
  for (auto j : w.snapshots) {
    const auto& p = s[j].p.values;
    const double mean = detail::shifted_mean(p, w.cells);
    double a = 0.0;
    for (auto k : w.cells) a += (p[k] - mean) * (p[k] - mean);
    amax = std::max(amax, a * vol);
    rep.times.push_back(s[j].t);
    rep.p_mean.push_back(mean);
  }
  rep.A_r = amax / detail::ipow_r(q.r, n);

  const double inv_count = 1.0 / static_cast<double>(w.cells.size());
  rep.m_mean.assign(n, 0.0);
  for (int c = 0; c < n; ++c) {
    const double ref = s[w.snapshots.front()].m.at(c, w.cells.front());
    double acc = 0.0;
    for (std::size_t j = 0; j < w.snapshots.size(); ++j) {
      double b = 0.0;
      for (auto k : w.cells) b += s[w.snapshots[j]].m.at(c, k) - ref;
      acc += w.weights[j] * b * inv_count;
    }
    rep.m_mean[c] = ref + acc;
  }
  double osc = 0.0;
  for (std::size_t j = 0; j < w.snapshots.size(); ++j) {
    const auto& m = s[w.snapshots[j]].m;
    double b = 0.0;
    for (auto k : w.cells)
      for (int c = 0; c < n; ++c) {
        const double d = m.at(c, k) - rep.m_mean[c];
        b += d * d;
      }
    osc += w.weights[j] * b;
  }
  // r^{-(N+2)} * r^2 * (time average of the ball integral).
  rep.osc_m = osc * vol / detail::ipow_r(q.r, n);
  rep.E_r = rep.osc_m + rep.A_r + std::pow(q.r, 2.0 * beta);
  return rep;
}

struct DecayProbeReport {
  Point y{};
  double tau = 0.0;
  double delta = 0.5;
  double beta = 0.0;
  std::vector<double> radii;
  std::vector<double> energies;
  std::vector<double> ratios;  // E_{delta r} / E_r per rung
  std::vector<bool> halved;
  std::vector<std::pair<double, double>> halving_pairs;  // (delta, E_r) where E_{delta r} <= E_r / 2
  double gamma_fit = std::numeric_limits<double>::quiet_NaN();
  double c_fit = std::numeric_limits<double>::quiet_NaN();
  double fit_residual = std::numeric_limits<double>::quiet_NaN();  // rms of log residuals
  double sup_m_mean = 0.0;
  bool truncated = false;
  std::string truncation_reason;
};

namespace detail {

struct LineFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double rms = std::numeric_limits<double>::quiet_NaN();
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) return f;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) return f;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  double r2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double e = y[k] - f.intercept - f.slope * x[k];
    r2 += e * e;
  }
  f.rms = std::sqrt(r2 / n);
  return f;
}

}  // namespace detail

/// E at radii r0 delta^k, k = 0..rungs, and the fit E_rho ~ c rho^gamma.
inline DecayProbeReport decay_probe(const SpaceTimeSeries& s, const Point& y, double tau, double r0, double beta,
                                    double delta = 0.5, int rungs = 3) {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (rungs < 1) throw ConfigError("decay probe needs at least one rung");
  DecayProbeReport rep;
  rep.y = y;
  rep.tau = tau;
  rep.delta = delta;
  rep.beta = beta;
  double r = r0;
  for (int k = 0; k <= rungs; ++k, r *= delta) {
    ScaledEnergyReport e;
    try {
      e = scaled_energy(s, {y, tau, r}, beta);
    } catch (const Error& err) {
      if (k == 0) throw;
      rep.truncated = true;
      rep.truncation_reason = "rung " + std::to_string(k) + ": " + err.what();
      break;
    }
    rep.radii.push_back(r);
    rep.energies.push_back(e.E_r);
    double mm = 0.0;
    for (double v : e.m_mean) mm += v * v;
    rep.sup_m_mean = std::max(rep.sup_m_mean, std::sqrt(mm));
  }
  for (std::size_t k = 1; k < rep.energies.size(); ++k) {
    const double ratio = rep.energies[k] / rep.energies[k - 1];
    rep.ratios.push_back(ratio);
    // Equality counts as halving; allow for rounding in the ratio itself.
    const bool halved = ratio <= 0.5 * (1.0 + 1e-14);
    rep.halved.push_back(halved);
    if (halved) rep.halving_pairs.emplace_back(delta, rep.energies[k - 1]);
  }
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < rep.radii.size(); ++k) {
    lx.push_back(std::log(rep.radii[k]));
    ly.push_back(std::log(rep.energies[k]));
  }
  const auto fit = detail::least_squares(lx, ly);
  rep.gamma_fit = fit.slope;
  rep.c_fit = std::exp(fit.intercept);
  rep.fit_residual = fit.rms;
  return rep;
}

/// O = B_radius(center) x [t0, t1].
struct CampanatoRegion {
  Point center{};
  double radius = 0.0;
  double t0 = 0.0;
  double t1 = 0.0;
};

struct HolderFit {
  CampanatoRegion region;
  double alpha = 0.0;
  double campanato_A = 0.0;  // max over (z, rho) of (mean oscillation / rho^{2 alpha})^{1/2}
  double seminorm = 0.0;     // [m]_{alpha, O} over sampled pairs
  double ratio = 0.0;        // seminorm / A (0 when A = 0)
  std::vector<double> rhos;
  std::vector<double> max_mean_osc;  // per rho, max over sampled z
  double alpha_fit = std::numeric_limits<double>::quiet_NaN();  // half the log-log slope of max_mean_osc
  std::vector<std::size_t> sample_cells;
  std::vector<std::size_t> sample_snapshots;
};

namespace detail {

inline std::vector<std::size_t> thin(std::vector<std::size_t> v, std::size_t cap) {
  if (v.size() <= cap || cap == 0) return v;
  const std::size_t stride = (v.size() + cap - 1) / cap;
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < v.size(); k += stride) out.push_back(v[k]);
  return out;
}

/// Time-averaged ball average of |m - m_{z,rho}|^2.
inline double mean_oscillation(const SpaceTimeSeries& s, const ParabolicCylinder& q) {
  const auto w = resolved_window(s, q);
  const int n = s.grid().dim();
  const double inv = 1.0 / static_cast<double>(w.cells.size());
  std::vector<double> mean(n, 0.0);
  for (int c = 0; c < n; ++c) {
    const double ref = s[w.snapshots.front()].m.at(c, w.cells.front());
    double acc = 0.0;
    for (std::size_t j = 0; j < w.snapshots.size(); ++j) {
      double b = 0.0;
      for (auto k : w.cells) b += s[w.snapshots[j]].m.at(c, k) - ref;
      acc += w.weights[j] * b * inv;
    }
    mean[c] = ref + acc;
  }
  double osc = 0.0;
  for (std::size_t j = 0; j < w.snapshots.size(); ++j) {
    double b = 0.0;
    for (auto k : w.cells)
      for (int c = 0; c < n; ++c) {
        const double d = s[w.snapshots[j]].m.at(c, k) - mean[c];
        b += d * d;
      }
    osc += w.weights[j] * b * inv;
  }
  return osc;
}

}  // namespace detail

/// Campanato constant and direct parabolic Holder seminorm of m over O.
/// Sample points are the cell centres in O (thinned to `max_space`) at the
/// snapshots in [t0, t1] (thinned to `max_time`); cylinders that leave the
/// domain are skipped.
inline HolderFit campanato_fit(const SpaceTimeSeries& s, const CampanatoRegion& region, double alpha,
                               const std::vector<double>& rhos, std::size_t max_space = 400,
                               std::size_t max_time = 8) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("Holder exponent must lie in (0, 1)");
  if (rhos.empty()) throw ConfigError("campanato_fit needs at least one radius");
  const GridSpec& g = s.grid();
  const int n = g.dim();
  HolderFit fit;
  fit.region = region;
  fit.alpha = alpha;
  fit.rhos = rhos;
  const auto space = detail::thin(ball_cells(g, region.center, region.radius), max_space);
  std::vector<std::size_t> times;
  for (auto k : s.window(region.t0, region.t1)) times.push_back(k);
  times = detail::thin(times, max_time);
  fit.sample_cells = space;
  fit.sample_snapshots = times;
  if (space.empty() || times.empty()) throw DataError("campanato_fit: empty sample set");

  std::size_t used = 0;
  for (double rho : rhos) {
    double mx = 0.0;
    for (auto j : times)
      for (auto k : space) {
        double osc = 0.0;
        try {
          osc = detail::mean_oscillation(s, {g.center(k), s[j].t, rho});
        } catch (const DegenerateProbeError&) {
          continue;
        }
        ++used;
        mx = std::max(mx, osc);
        fit.campanato_A = std::max(fit.campanato_A, std::sqrt(osc / std::pow(rho, 2.0 * alpha)));
      }
    fit.max_mean_osc.push_back(mx);
  }
  if (used == 0) throw DataError("campanato_fit: no admissible cylinder in the sample set");

  // Direct seminorm over all sampled pairs.
  for (std::size_t a = 0; a < times.size(); ++a)
    for (std::size_t b = a; b < times.size(); ++b) {
      const auto& sa = s[times[a]];
      const auto& sb = s[times[b]];
      const double dts = std::sqrt(std::abs(sa.t - sb.t));
      for (std::size_t i = 0; i < space.size(); ++i)
        for (std::size_t j = (a == b ? i + 1 : 0); j < space.size(); ++j) {
          const double dist = distance(g.center(space[i]), g.center(space[j]), n) + dts;
          if (dist == 0.0) continue;
          double dm = 0.0;
          for (int c = 0; c < n; ++c) {
            const double d = sa.m.at(c, space[i]) - sb.m.at(c, space[j]);
            dm += d * d;
          }
          fit.seminorm = std::max(fit.seminorm, std::sqrt(dm) / std::pow(dist, alpha));
        }
    }
  fit.ratio = fit.campanato_A > 0.0 ? fit.seminorm / fit.campanato_A : 0.0;

  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < rhos.size(); ++k)
    if (fit.max_mean_osc[k] > 0.0) {
      lx.push_back(std::log(rhos[k]));
      ly.push_back(std::log(fit.max_mean_osc[k]));
    }
  fit.alpha_fit = 0.5 * detail::least_squares(lx, ly).slope;
  return fit;
}

/// Spatial Campanato fit of p on one snapshot (no claim in time).
inline HolderFit campanato_fit_pressure_slice(const SpaceTimeSeries& s, std::size_t t_index, const Point& center,
                                              double radius, double alpha, const std::vector<double>& rhos,
                                              std::size_t max_space = 400) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("Holder exponent must lie in (0, 1)");
  if (rhos.empty()) throw ConfigError("campanato fit needs at least one radius");
  if (t_index >= s.size()) throw DataError("snapshot index out of range");
  const GridSpec& g = s.grid();
  const int n = g.dim();
  const auto& p = s[t_index].p;
  HolderFit fit;
  fit.region = {center, radius, s[t_index].t, s[t_index].t};
  fit.alpha = alpha;
  fit.rhos = rhos;
  fit.sample_cells = detail::thin(ball_cells(g, center, radius), max_space);
  fit.sample_snapshots = {t_index};
  if (fit.sample_cells.empty()) throw DataError("campanato fit: empty sample set");
  std::size_t used = 0;
  for (double rho : rhos) {
    double mx = 0.0;
    for (auto k : fit.sample_cells) {
      std::vector<std::size_t> ball;
      try {
        ball = probe_ball(g, g.center(k), rho);
      } catch (const DegenerateProbeError&) {
        continue;
      }
      ++used;
      const double mean = detail::shifted_mean(p.values, ball);
      double osc = 0.0;
      for (auto j : ball) osc += (p[j] - mean) * (p[j] - mean);
      osc /= static_cast<double>(ball.size());
      mx = std::max(mx, osc);
      fit.campanato_A = std::max(fit.campanato_A, std::sqrt(osc / std::pow(rho, 2.0 * alpha)));
    }
    fit.max_mean_osc.push_back(mx);
  }
  if (used == 0) throw DataError("campanato fit: no admissible ball in the sample set");
  const auto& cells = fit.sample_cells;
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (std::size_t j = i + 1; j < cells.size(); ++j)
      fit.seminorm = std::max(fit.seminorm, std::abs(p[cells[i]] - p[cells[j]]) /
                                                std::pow(distance(g.center(cells[i]), g.center(cells[j]), n), alpha));
  fit.ratio = fit.campanato_A > 0.0 ? fit.seminorm / fit.campanato_A : 0.0;
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < rhos.size(); ++k)
    if (fit.max_mean_osc[k] > 0.0) {
      lx.push_back(std::log(rhos[k]));
      ly.push_back(std::log(fit.max_mean_osc[k]));
    }
  fit.alpha_fit = 0.5 * detail::least_squares(lx, ly).slope;
  return fit;
}

/// Per-snapshot cell densities of |m|^d + |dt m|^2 + |grad m|^2 + |grad p|^2 + (m . grad p)^2.
/// dt m is the backward difference (forward at the first snapshot).
struct HEpsIntegrand {
  double d = 0.0;
  std::vector<ScalarField> density;
};

inline HEpsIntegrand h_eps_integrand(const SpaceTimeSeries& s, double d) {
  if (!(d > 0.0)) throw ConfigError("H_eps exponent d must be positive");
  HEpsIntegrand out;
  out.d = d;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const auto& snap = s[j];
    const auto& g = snap.m.grid;
    ScalarField f = gradient_density(snap.m);
    const auto dp = gradient_density(snap.p);
    const auto da = PressureOperator(snap.m).anisotropic_density(snap.p.values);
    for (std::size_t k = 0; k < g.cell_count(); ++k) f[k] += dp[k] + da[k] + std::pow(snap.m.norm_sq_at(k), 0.5 * d);
    if (s.size() > 1) {
      const std::size_t a = j == 0 ? 0 : j - 1, b = j == 0 ? 1 : j;
      const double dt = s[b].t - s[a].t;
      for (int c = 0; c < g.dim(); ++c)
        for (std::size_t k = 0; k < g.cell_count(); ++k) {
          const double v = (s[b].m.at(c, k) - s[a].m.at(c, k)) / dt;
          f[k] += v * v;
        }
    }
    out.density.push_back(std::move(f));
  }
  return out;
}

/// rho^{-(N + eps)} int_{Q_rho(z)} of the H_eps integrand.
inline double h_eps_density(const SpaceTimeSeries& s, const HEpsIntegrand& f, const ParabolicCylinder& q,
                            double eps) {
  if (f.density.size() != s.size()) throw ShapeError("H_eps integrand does not match the series");
  const auto w = detail::resolved_window(s, q);
  const GridSpec& g = s.grid();
  double acc = 0.0;
  for (std::size_t j = 0; j < w.snapshots.size(); ++j) {
    double b = 0.0;
    for (auto k : w.cells) b += f.density[w.snapshots[j]][k];
    acc += w.weights[j] * b;
  }
  return acc * g.cell_volume() * q.r * q.r / std::pow(q.r, g.dim() + eps);
}

inline double h_eps_density(const SpaceTimeSeries& s, const ParabolicCylinder& q, double eps, double d) {
  return h_eps_density(s, h_eps_integrand(s, d), q, eps);
}

enum class PointClass { Regular, Undecided, Singular };

inline const char* to_string(PointClass c) {
  switch (c) {
    case PointClass::Regular:
      return "regular";
    case PointClass::Singular:
      return "singular";
    default:
      return "undecided";
  }
}

/// Lattice y = pitch * (i_1, ..., i_N), i_a >= 1, strictly inside the domain, at each tau.
inline std::vector<SpaceTimeProbe> probe_lattice(const GridSpec& g, double pitch, const std::vector<double>& taus) {
  if (!(pitch > 0.0)) throw ConfigError("lattice pitch must be positive");
  std::array<int, 3> count{1, 1, 1};
  for (int a = 0; a < g.dim(); ++a) {
    count[a] = static_cast<int>(std::ceil(g.extent(a) / pitch - 1e-9)) - 1;
    if (count[a] < 1) throw ConfigError("lattice pitch exceeds the domain");
  }
  std::vector<SpaceTimeProbe> out;
  for (double tau : taus)
    for (int i = 0; i < count[0]; ++i)
      for (int j = 0; j < count[1]; ++j)
        for (int k = 0; k < count[2]; ++k) {
          SpaceTimeProbe p;
          const std::array<int, 3> idx{i, j, k};
          for (int a = 0; a < g.dim(); ++a) p.y[a] = pitch * (idx[a] + 1);
          p.tau = tau;
          out.push_back(p);
        }
  return out;
}

struct ClassifyConfig {
  double M = std::numeric_limits<double>::quiet_NaN();  // NaN: 10 max|m| at the first snapshot (1 if zero)
  double eps = 1.0;
  double d = std::numeric_limits<double>::quiet_NaN();     // NaN: default_h_eps_exponent(N)
  double beta = std::numeric_limits<double>::quiet_NaN();  // NaN: default_beta(N, q)
  double q = std::numeric_limits<double>::infinity();
  std::vector<double> radii;  // decreasing; empty: 4 rungs halving from min extent / 8
  double tau_E = 0.25;
  int workers = 1;
};

struct ProbeClassification {
  SpaceTimeProbe probe;
  PointClass cls = PointClass::Undecided;
  std::vector<double> energies;   // E_rho per rung
  std::vector<double> densities;  // H_eps density per rung
  double sup_m_mean = 0.0;
  std::string note;  // why a probe degraded to undecided
};

struct RegularityMap {
  int dim = 0;
  double M = 0.0, eps = 0.0, d = 0.0, beta = 0.0, tau_E = 0.0;
  std::vector<double> radii;
  std::vector<ProbeClassification> probes;

  std::size_t count(PointClass c) const {
    return static_cast<std::size_t>(
        std::count_if(probes.begin(), probes.end(), [&](const auto& p) { return p.cls == c; }));
  }
  std::vector<SpaceTimeProbe> flagged() const {
    std::vector<SpaceTimeProbe> out;
    for (const auto& p : probes)
      if (p.cls == PointClass::Singular) out.push_back(p.probe);
    return out;
  }
};

/// Resolved parameters for a series (defaults filled in).
inline ClassifyConfig resolve_classify_config(const SpaceTimeSeries& s, ClassifyConfig cfg) {
  const GridSpec& g = s.grid();
  const int n = g.dim();
  if (std::isnan(cfg.M)) {
    const double m0 = s.empty() ? 0.0 : s[0].m.max_abs();
    cfg.M = m0 > 0.0 ? 10.0 * m0 : 1.0;
  }
  if (std::isnan(cfg.d)) cfg.d = default_h_eps_exponent(n);
  if (std::isnan(cfg.beta)) cfg.beta = default_beta(n, cfg.q);
  if (cfg.radii.empty()) {
    double w = g.extent(0);
    for (int a = 1; a < n; ++a) w = std::min(w, g.extent(a));
    for (int k = 0; k < 4; ++k) cfg.radii.push_back(w / 8.0 / (1 << k));
  }
  if (!(cfg.M > 0.0)) throw ConfigError("M must be positive");
  if (!(cfg.eps > 0.0)) throw ConfigError("eps must be positive");
  const double dmin = n == 2 ? 2.0 + 8.0 / n : 0.0;
  if (!(cfg.d > dmin)) throw ConfigError("d must exceed 2 + 8/N for N = 2");
  if (!(cfg.beta > 0.0 && cfg.beta < std::min(2.0 - n / cfg.q, 1.0)))
    throw ConfigError("beta must satisfy 0 < beta < min(2 - N/q, 1)");
  if (cfg.radii.size() < 2) throw ConfigError("classification needs at least two radii");
  for (std::size_t k = 1; k < cfg.radii.size(); ++k)
    if (!(cfg.radii[k] < cfg.radii[k - 1])) throw ConfigError("radii must decrease strictly");
  if (!(cfg.tau_E > 0.0)) throw ConfigError("tau_E must be positive");
  return cfg;
}

/// Classifies one probe against already-resolved parameters.
inline ProbeClassification classify_probe(const SpaceTimeSeries& s, const HEpsIntegrand& f, const ClassifyConfig& cfg,
                                          const SpaceTimeProbe& z) {
  ProbeClassification out;
  out.probe = z;
  try {
    for (double r : cfg.radii) {
      const ParabolicCylinder q{z.y, z.tau, r};
      const auto e = scaled_energy(s, q, cfg.beta);
      out.energies.push_back(e.E_r);
      double mm = 0.0;
      for (double v : e.m_mean) mm += v * v;
      out.sup_m_mean = std::max(out.sup_m_mean, std::sqrt(mm));
      out.densities.push_back(h_eps_density(s, f, q, cfg.eps));
    }
  } catch (const Error& e) {
    out.cls = PointClass::Undecided;
    out.note = e.what();
    return out;
  }
  bool decreasing = true, growing = true;
  for (std::size_t k = 1; k < out.energies.size(); ++k) {
    decreasing = decreasing && out.energies[k] <= out.energies[k - 1];
    growing = growing && out.densities[k] >= out.densities[k - 1];
  }
  if (out.sup_m_mean < cfg.M && decreasing && out.energies.back() < cfg.tau_E) out.cls = PointClass::Regular;
  else if (growing) out.cls = PointClass::Singular;
  else out.cls = PointClass::Undecided;
  return out;
}

/// Classifies every probe; results do not depend on the worker count.
inline RegularityMap classify_points(const SpaceTimeSeries& s, const std::vector<SpaceTimeProbe>& lattice,
                                     const ClassifyConfig& config) {
  const ClassifyConfig cfg = resolve_classify_config(s, config);
  const auto f = h_eps_integrand(s, cfg.d);
  RegularityMap map;
  map.dim = s.grid().dim();
  map.M = cfg.M;
  map.eps = cfg.eps;
  map.d = cfg.d;
  map.beta = cfg.beta;
  map.tau_E = cfg.tau_E;
  map.radii = cfg.radii;
  map.probes.resize(lattice.size());
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.workers, 1)), lattice.size()));
  auto run = [&](std::size_t first) {
    for (std::size_t k = first; k < lattice.size(); k += workers) map.probes[k] = classify_probe(s, f, cfg, lattice[k]);
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  return map;
}

inline void write_regularity_csv(const std::filesystem::path& path, const RegularityMap& map) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << std::setprecision(17);
  for (int a = 0; a < map.dim; ++a) out << 'y' << a << ',';
  out << "tau,class,sup_m_mean";
  for (std::size_t k = 0; k < map.radii.size(); ++k) out << ",E_" << k;
  for (std::size_t k = 0; k < map.radii.size(); ++k) out << ",H_" << k;
  out << '\n';
  for (const auto& p : map.probes) {
    for (int a = 0; a < map.dim; ++a) out << p.probe.y[a] << ',';
    out << p.probe.tau << ',' << to_string(p.cls) << ',' << p.sup_m_mean;
    for (std::size_t k = 0; k < map.radii.size(); ++k) out << ',' << (k < p.energies.size() ? p.energies[k] : NAN);
    for (std::size_t k = 0; k < map.radii.size(); ++k) out << ',' << (k < p.densities.size() ? p.densities[k] : NAN);
    out << '\n';
  }
}

/// Flagged-points file: header y0,..,tau then one singular candidate per line.
inline void write_flagged_points(const std::filesystem::path& path, int dim, const std::vector<SpaceTimeProbe>& pts) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << std::setprecision(17);
  for (int a = 0; a < dim; ++a) out << 'y' << a << ',';
  out << "tau\n";
  for (const auto& p : pts) {
    for (int a = 0; a < dim; ++a) out << p.y[a] << ',';
    out << p.tau << '\n';
  }
}

inline std::vector<SpaceTimeProbe> read_flagged_points(const std::filesystem::path& path, int* dim_out = nullptr) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty flagged-points file");
  const int cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  const int dim = cols - 1;
  if (dim < 1 || dim > 3 || line.rfind("y0", 0) != 0) throw FormatError(path.string() + ": bad header '" + line + "'");
  std::vector<SpaceTimeProbe> pts;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (static_cast<int>(v.size()) != cols)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) + " values");
    SpaceTimeProbe p;
    for (int a = 0; a < dim; ++a) p.y[a] = v[a];
    p.tau = v[dim];
    pts.push_back(p);
  }
  if (dim_out) *dim_out = dim;
  return pts;
}

/// The series zoomed into the unit cylinder Q_1(0) around a probe.
struct RescaledWindow {
  ParabolicCylinder probe;
  double beta = 0.0;
  double lambda = 0.0;  // sqrt(E_r)
  double A_r = 0.0, osc_m = 0.0;
  std::vector<double> m_mean;
  GridSpec unit_grid;            // n^N cells on [0, 2]^N, shifted by -1 for Q_1 coordinates
  std::vector<char> mask;        // lattice point inside B_1
  std::vector<double> tau_hat;   // time levels in (-1/2, 1/2)
  std::vector<double> source_t;  // snapshot time used for each level
  std::vector<ScalarField> psi;
  std::vector<VectorField> w, n;
  double psi_norm = 0.0;  // max over levels of int_{B_1} psi^2
  double w_norm = 0.0;    // int_{Q_1} |w|^2
  double psi_excess() const { return psi_norm - 1.0; }
  double w_excess() const { return w_norm - 1.0; }
  double psi_defect = 0.0;  // |psi_norm - A_r / lambda^2|
  double w_defect = 0.0;    // |w_norm - osc_m / lambda^2|
};

namespace detail {

/// Multilinear interpolation of cell-centred data; ghosts across walls are odd reflections.
inline double interpolate(const GridSpec& g, std::span<const double> u, const Point& x) {
  const int n = g.dim();
  std::array<int, 3> i0{0, 0, 0};
  std::array<double, 3> fr{0, 0, 0};
  for (int a = 0; a < n; ++a) {
    const double s = x[a] / g.spacing(a) - 0.5;
    i0[a] = static_cast<int>(std::floor(s));
    fr[a] = s - i0[a];
  }
  auto value = [&](std::array<int, 3> idx) {
    double sign = 1.0;
    Index i{0, 0, 0};
    for (int a = 0; a < n; ++a) {
      int k = idx[a];
      if (k < 0) {
        k = -k - 1;
        sign = -sign;
      } else if (k >= g.cells(a)) {
        k = 2 * g.cells(a) - 1 - k;
        sign = -sign;
      }
      i[a] = std::clamp(k, 0, g.cells(a) - 1);
    }
    return sign * u[g.flat(i)];
  };
  double acc = 0.0;
  for (int corner = 0; corner < (1 << n); ++corner) {
    double wgt = 1.0;
    std::array<int, 3> idx = i0;
    for (int a = 0; a < n; ++a) {
      const int bit = (corner >> a) & 1;
      idx[a] += bit;
      wgt *= bit ? fr[a] : 1.0 - fr[a];
    }
    if (wgt != 0.0) acc += wgt * value(idx);
  }
  return acc;
}

}  // namespace detail

/// psi = (p(y + r yh, tau + r^2 th) - p_{y,r}) / lambda, w = (m - m_{z,r}) / lambda, n = m,
/// on an n_space^N lattice of B_1 cell centres and n_time levels (nearest snapshot in time).
inline RescaledWindow rescale_window(const SpaceTimeSeries& s, const ParabolicCylinder& q, double beta,
                                     int n_space = 32, int n_time = 8) {
  if (n_space < 2 || n_time < 1) throw ConfigError("rescale lattice too small");
  const auto e = scaled_energy(s, q, beta);
  const GridSpec& g = s.grid();
  const int dim = g.dim();
  RescaledWindow rw;
  rw.probe = q;
  rw.beta = beta;
  rw.lambda = std::sqrt(e.E_r);
  rw.A_r = e.A_r;
  rw.osc_m = e.osc_m;
  rw.m_mean = e.m_mean;
  rw.unit_grid = GridSpec(dim, {n_space, n_space, n_space}, {2.0, 2.0, 2.0});
  const GridSpec& ug = rw.unit_grid;
  const std::size_t cells = ug.cell_count();
  rw.mask.assign(cells, 0);
  std::vector<Point> phys(cells);
  for (std::size_t k = 0; k < cells; ++k) {
    const Point c = ug.center(k);
    double r2 = 0.0;
    for (int a = 0; a < dim; ++a) {
      const double yh = c[a] - 1.0;
      r2 += yh * yh;
      phys[k][a] = q.y[a] + q.r * yh;
    }
    rw.mask[k] = r2 < 1.0 ? 1 : 0;
  }
  const double uvol = ug.cell_volume();
  const auto ball = probe_ball(g, q.y, q.r);
  for (int j = 0; j < n_time; ++j) {
    const double th = -0.5 + (j + 0.5) / n_time;
    const auto& snap = s[s.nearest(q.tau + q.r * q.r * th)];
    rw.tau_hat.push_back(th);
    rw.source_t.push_back(snap.t);
    const double pbar = detail::shifted_mean(snap.p.values, ball);
    ScalarField psi(ug);
    VectorField w(ug), nn(ug);
    double psi2 = 0.0, w2 = 0.0;
    for (std::size_t k = 0; k < cells; ++k) {
      if (!rw.mask[k]) continue;
      psi[k] = (detail::interpolate(g, snap.p.values, phys[k]) - pbar) / rw.lambda;
      psi2 += psi[k] * psi[k];
      for (int c = 0; c < dim; ++c) {
        const double mv = detail::interpolate(g, snap.m.component(c), phys[k]);
        nn.component(c)[k] = mv;
        w.component(c)[k] = (mv - rw.m_mean[c]) / rw.lambda;
        w2 += w.component(c)[k] * w.component(c)[k];
      }
    }
    rw.psi_norm = std::max(rw.psi_norm, psi2 * uvol);
    rw.w_norm += w2 * uvol / n_time;
    rw.psi.push_back(std::move(psi));
    rw.w.push_back(std::move(w));
    rw.n.push_back(std::move(nn));
  }
  const double l2 = rw.lambda * rw.lambda;
  rw.psi_defect = std::abs(rw.psi_norm - rw.A_r / l2);
  rw.w_defect = std::abs(rw.w_norm - rw.osc_m / l2);
  return rw;
}

/// One HCNS file per time level (p = psi, m = w; t = tau_hat) plus rescaled.json.
inline void write_rescaled_window(const std::filesystem::path& dir, const RescaledWindow& rw) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["y"] = std::vector<double>(rw.probe.y.begin(), rw.probe.y.begin() + rw.unit_grid.dim());
  j["tau"] = rw.probe.tau;
  j["r"] = rw.probe.r;
  j["beta"] = rw.beta;
  j["lambda"] = rw.lambda;
  j["m_mean"] = rw.m_mean;
  j["A_r"] = rw.A_r;
  j["osc_m"] = rw.osc_m;
  j["psi_norm"] = rw.psi_norm;
  j["w_norm"] = rw.w_norm;
  j["psi_excess"] = rw.psi_excess();
  j["w_excess"] = rw.w_excess();
  j["psi_defect"] = rw.psi_defect;
  j["w_defect"] = rw.w_defect;
  auto& files = j["levels"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < rw.psi.size(); ++k) {
    std::ostringstream name;
    name << "rescaled_" << std::setw(3) << std::setfill('0') << k << ".hcns";
    const auto crc = write_snapshot(dir / name.str(), rw.unit_grid, {rw.tau_hat[k], rw.psi[k], rw.w[k]});
    files.push_back({{"file", name.str()}, {"tau_hat", rw.tau_hat[k]}, {"source_t", rw.source_t[k]}, {"crc32", crc}});
  }
  std::ofstream out(dir / "rescaled.json");
  if (!out) throw DataError((dir / "rescaled.json").string() + ": cannot write");
  out << j.dump(2) << '\n';
}

/// p = eta + phi on the cells of B_r(y), with eta solving the frozen-coefficient
/// problem -div[(I + a (x) a) grad eta] = 0, a = m_{y,r}(t), eta = p on the boundary layer.
struct PressureDecomposition {
  GridSpec grid;  // bounding sub-box of the ball
  Index offset{0, 0, 0};
  Point y{};
  double r = 0.0;
  std::vector<double> a;
  std::vector<char> in_ball;
  std::vector<char> interior;  // unknowns: ball cells whose +-2 neighbourhood lies in the ball
  ScalarField p, eta, phi;     // zero outside the ball
  int cg_iterations = 0;
  double relative_residual = 0.0;

  /// Ball average of (f - f_bar)^2 over B_rho(y), rho <= r.
  double mean_oscillation(const ScalarField& f, double rho) const {
    std::vector<std::size_t> cells;
    for (std::size_t k = 0; k < grid.cell_count(); ++k) {
      if (!in_ball[k]) continue;
      Point x = grid.center(k);
      for (int d = 0; d < grid.dim(); ++d) x[d] += offset[d] * grid.spacing(d);
      if (distance(x, y, grid.dim()) < rho) cells.push_back(k);
    }
    if (cells.empty()) throw DegenerateProbeError("oscillation ball contains no cells");
    const double mean = detail::shifted_mean(f.values, cells);
    double s = 0.0;
    for (auto k : cells) s += (f[k] - mean) * (f[k] - mean);
    return s / static_cast<double>(cells.size());
  }
};

inline PressureDecomposition decompose_pressure(const SpaceTimeSeries& s, const Point& y, double r,
                                                std::size_t t_index, double tol = 1e-12) {
  if (t_index >= s.size()) throw DataError("decompose_pressure: snapshot index out of range");
  const GridSpec& g = s.grid();
  const int n = g.dim();
  const auto cells = probe_ball(g, y, r);
  const auto& snap = s[t_index];

  PressureDecomposition dec;
  dec.y = y;
  dec.r = r;
  Index lo{0, 0, 0}, hi{0, 0, 0};
  for (int a = 0; a < n; ++a) {
    lo[a] = std::numeric_limits<int>::max();
    hi[a] = -1;
  }
  for (auto k : cells) {
    const Index i = g.unflat(k);
    for (int a = 0; a < n; ++a) {
      lo[a] = std::min(lo[a], i[a]);
      hi[a] = std::max(hi[a], i[a]);
    }
  }
  Index sub{1, 1, 1};
  Point ext{1.0, 1.0, 1.0};
  for (int a = 0; a < n; ++a) {
    sub[a] = hi[a] - lo[a] + 1;
    if (sub[a] < 3) throw DegenerateProbeError("decomposition ball is less than 3 cells across");
    ext[a] = sub[a] * g.spacing(a);
  }
  dec.grid = GridSpec(n, sub, ext);
  dec.offset = lo;
  const GridSpec& sg = dec.grid;
  const std::size_t sc = sg.cell_count();
  auto global = [&](std::size_t k) {
    Index i = sg.unflat(k);
    for (int a = 0; a < n; ++a) i[a] += lo[a];
    return g.flat(i);
  };
  dec.in_ball.assign(sc, 0);
  for (std::size_t k = 0; k < sc; ++k) dec.in_ball[k] = distance(g.center(global(k)), y, n) < r ? 1 : 0;
  dec.interior.assign(sc, 0);
  for (std::size_t k = 0; k < sc; ++k) {
    if (!dec.in_ball[k]) continue;
    const Index i = sg.unflat(k);
    bool ok = true;
    Index d{0, 0, 0};
    for (d[0] = -2; d[0] <= 2 && ok; ++d[0])
      for (d[1] = (n > 1 ? -2 : 0); d[1] <= (n > 1 ? 2 : 0) && ok; ++d[1])
        for (d[2] = (n > 2 ? -2 : 0); d[2] <= (n > 2 ? 2 : 0) && ok; ++d[2]) {
          Index j{i[0] + d[0], i[1] + d[1], i[2] + d[2]};
          for (int a = 0; a < n; ++a) ok = ok && j[a] >= 0 && j[a] < sub[a];
          if (ok) ok = dec.in_ball[sg.flat(j)] != 0;
        }
    dec.interior[k] = ok ? 1 : 0;
  }

  // Frozen coefficient: the ball average of m at this snapshot.
  dec.a.assign(n, 0.0);
  for (int c = 0; c < n; ++c) dec.a[c] = detail::shifted_mean(snap.m.component(c), cells);

  dec.p = ScalarField(sg);
  for (std::size_t k = 0; k < sc; ++k)
    if (dec.in_ball[k]) dec.p[k] = snap.p[global(k)];

  std::vector<std::size_t> unknowns;
  for (std::size_t k = 0; k < sc; ++k)
    if (dec.interior[k]) unknowns.push_back(k);
  dec.eta = dec.p;
  if (!unknowns.empty()) {
    const PressureOperator op(sg, dec.a);
    ScalarField layer = dec.p;
    for (auto k : unknowns) layer[k] = 0.0;
    const auto A_layer = op.apply(layer);
    const auto full_diag = op.diagonal();
    std::vector<double> b(unknowns.size()), diag(unknowns.size()), x(unknowns.size());
    for (std::size_t u = 0; u < unknowns.size(); ++u) {
      b[u] = -A_layer[unknowns[u]];
      diag[u] = full_diag[unknowns[u]];
      x[u] = dec.p[unknowns[u]];
    }
    std::vector<double> ext_in(sc, 0.0), ext_out(sc, 0.0);
    auto apply = [&](std::span<const double> v, std::span<double> out) {
      std::fill(ext_in.begin(), ext_in.end(), 0.0);
      for (std::size_t u = 0; u < unknowns.size(); ++u) ext_in[unknowns[u]] = v[u];
      op.apply(ext_in, ext_out);
      for (std::size_t u = 0; u < unknowns.size(); ++u) out[u] = ext_out[unknowns[u]];
    };
    const int cap = static_cast<int>(50.0 * std::sqrt(static_cast<double>(unknowns.size()))) + 50;
    const auto res = conjugate_gradient(apply, diag, b, x, tol, cap);
    dec.cg_iterations = res.iterations;
    dec.relative_residual = res.relative_residual;
    for (std::size_t u = 0; u < unknowns.size(); ++u) dec.eta[unknowns[u]] = x[u];
  }
  dec.phi = ScalarField(sg);
  for (std::size_t k = 0; k < sc; ++k)
    if (dec.in_ball[k]) dec.phi[k] = dec.p[k] - dec.eta[k];
  return dec;
}

}  // namespace hcns
