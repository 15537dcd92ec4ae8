#pragma once

// Global energy identities and bounds evaluated on discrete trajectories.
//
// All spatial integrals use the quadratures of the operators themselves:
// |grad u|^2 through the staggered face gradient, (m . grad p)^2 through the
// pressure operator's face families. With these choices the pressure identity
// sum |grad p|^2 + (m . grad p)^2 = sum S p holds up to the CG residual and the
// conductance balance is exact in space, leaving only time-discretization error.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>
#include <vector>

#include "hcns/averaging.hpp"
#include "hcns/conductance.hpp"
#include "hcns/series.hpp"

namespace hcns {

namespace detail {

inline double sum_times_volume(const ScalarField& f) {
  double s = 0.0;
  for (double x : f.values) s += x;
  return s * f.grid.cell_volume();
}

inline double power_integral(const VectorField& m, double expo) {
  double s = 0.0;
  for (std::size_t k = 0; k < m.cells(); ++k) s += std::pow(m.norm_sq_at(k), 0.5 * expo);
  return s * m.grid.cell_volume();
}

}  // namespace detail

/// The spatial integrals entering the identities, at one time.
struct EnergyTerms {
  double grad_m_sq = 0.0;  // |grad m|^2
  double aniso = 0.0;      // (m . grad p)^2
  double grad_p_sq = 0.0;  // |grad p|^2
  double m_pow = 0.0;      // |m|^{2 gamma}
  double m_sq = 0.0;       // |m|^2
  double source_work = 0.0;  // S p
};

inline EnergyTerms energy_terms(const ScalarField& p, const VectorField& m, const ScalarField* S, double gamma) {
  require_same_grid(p.grid, m.grid, "energy terms");
  EnergyTerms e;
  PressureOperator op(m);
  e.grad_m_sq = detail::sum_times_volume(gradient_density(m));
  e.aniso = op.anisotropic_energy(p.values);
  e.grad_p_sq = op.gradient_energy(p.values);
  e.m_pow = detail::power_integral(m, 2.0 * gamma);
  e.m_sq = inner(m, m);
  if (S) {
    require_same_grid(p.grid, S->grid, "energy terms");
    e.source_work = inner(*S, p);
  }
  return e;
}

/// L = D^2/2 |grad m|^2 + E^2/2 |m . grad p|^2 + E^2/2 |grad p|^2 + 1/(2 gamma) |m|_{2 gamma}^{2 gamma}.
inline double lyapunov_value(const EnergyTerms& e, const StepParams& prm) {
  const double d2 = prm.D * prm.D, e2 = prm.E * prm.E;
  return 0.5 * d2 * e.grad_m_sq + 0.5 * e2 * (e.aniso + e.grad_p_sq) + e.m_pow / (2.0 * prm.gamma);
}

inline double lyapunov_value(const ScalarField& p, const VectorField& m, const StepParams& prm) {
  return lyapunov_value(energy_terms(p, m, nullptr, prm.gamma), prm);
}

/// Rate of the balance: D^2|grad m|^2 + E^2 (m.grad p)^2 + |m|^{2g} + 2E^2 |grad p|^2 - 2E^2 S p.
inline double balance_rate(const EnergyTerms& e, const StepParams& prm) {
  const double d2 = prm.D * prm.D, e2 = prm.E * prm.E;
  return d2 * e.grad_m_sq + e2 * e.aniso + e.m_pow + 2.0 * e2 * e.grad_p_sq - 2.0 * e2 * e.source_work;
}

namespace detail {

/// Snapshot indices with t <= tau; throws if the series stops short of tau.
inline std::size_t last_index_through(const SpaceTimeSeries& s, double tau) {
  if (s.empty()) throw DataError("empty series");
  const double tol = 1e-9 * std::max(1.0, s.horizon());
  if (tau < s[0].t - tol) throw DataError("balance time precedes the first snapshot");
  std::size_t last = 0;
  while (last + 1 < s.size() && s[last + 1].t <= tau + tol) ++last;
  if (std::abs(s[last].t - tau) > tol)
    throw DataError("series has no snapshot at t = " + std::to_string(tau) + " (truncated or off-cadence)");
  return last;
}

}  // namespace detail

/// Signed defect of the conductance energy balance over [t_0, tau]:
///   1/2|m(tau)|^2 + int (D^2|grad m|^2 + E^2 (m.grad p)^2 + |m|^{2g} + 2E^2|grad p|^2)
///   - 1/2|m(t_0)|^2 - 2E^2 int S p,
/// time integrals by the trapezoidal rule over the stored snapshots.
inline double dissipation_balance(const SpaceTimeSeries& s, const StepParams& prm, const ScalarField& S, double tau) {
  const std::size_t last = detail::last_index_through(s, tau);
  double integral = 0.0, prev_rate = 0.0;
  EnergyTerms first, cur;
  for (std::size_t k = 0; k <= last; ++k) {
    cur = energy_terms(s[k].p, s[k].m, &S, prm.gamma);
    const double rate = balance_rate(cur, prm);
    if (k == 0) first = cur;
    else integral += 0.5 * (s[k].t - s[k - 1].t) * (rate + prev_rate);
    prev_rate = rate;
  }
  return 0.5 * cur.m_sq + integral - 0.5 * first.m_sq;
}

struct SupPressureReport {
  double max_abs_p = 0.0;
  double source_norm = 0.0;
  double ratio = 0.0;
};

/// max over time of max|p| against |S|_q.
inline SupPressureReport sup_pressure_check(const SpaceTimeSeries& s, const ScalarField& S, double q) {
  const int n = S.grid.dim();
  if (!(q > 0.5 * n)) throw ConfigError("integrability exponent must satisfy q > N/2");
  SupPressureReport r;
  for (const auto& snap : s.snapshots()) r.max_abs_p = std::max(r.max_abs_p, snap.p.max_abs());
  r.source_norm = lq_integral(S, {}, q, true);
  r.ratio = r.source_norm > 0.0 ? r.max_abs_p / r.source_norm : 0.0;
  return r;
}

/// Sup over snapshots of the norms defining the weak-solution class.
struct WeakClassNorms {
  double grad_m = 0.0;       // |grad m|_2
  double m_2gamma = 0.0;     // |m|_{2 gamma}
  double grad_p = 0.0;       // |grad p|_2
  double m_dot_grad_p = 0.0; // |m . grad p|_2
  bool finite() const {
    return std::isfinite(grad_m) && std::isfinite(m_2gamma) && std::isfinite(grad_p) && std::isfinite(m_dot_grad_p);
  }
};

inline WeakClassNorms weak_class_norms(const SpaceTimeSeries& s, double gamma) {
  WeakClassNorms w;
  for (const auto& snap : s.snapshots()) {
    const auto e = energy_terms(snap.p, snap.m, nullptr, gamma);
    w.grad_m = std::max(w.grad_m, std::sqrt(e.grad_m_sq));
    w.m_2gamma = std::max(w.m_2gamma, std::pow(e.m_pow, 1.0 / (2.0 * gamma)));
    w.grad_p = std::max(w.grad_p, std::sqrt(e.grad_p_sq));
    w.m_dot_grad_p = std::max(w.m_dot_grad_p, std::sqrt(e.aniso));
  }
  return w;
}

struct GlobalEnergyRow {
  double t = 0.0;
  double dirichlet_residual = 0.0;
  double lyapunov = 0.0;
  double balance_defect = 0.0;
  double max_abs_p = 0.0;
  double c1_ratio = 0.0;
  double cum_dtm_sq = 0.0;
  double cum_grad_m_sq = 0.0;
  double cum_aniso = 0.0;
  double cum_m_pow = 0.0;
  double cum_grad_p_sq = 0.0;
};

struct GlobalEnergyReport {
  double q = std::numeric_limits<double>::infinity();
  double source_norm = 0.0;
  double c1_constant = 0.0;  // max over snapshots of c1_ratio
  std::vector<GlobalEnergyRow> rows;
};

/// Per-snapshot identities and cumulative integrals. dt m is the backward
/// difference of consecutive snapshots.
inline GlobalEnergyReport global_energy_report(const SpaceTimeSeries& s, const StepParams& prm, const ScalarField& S,
                                               double q = std::numeric_limits<double>::infinity()) {
  GlobalEnergyReport rep;
  rep.q = q;
  rep.source_norm = lq_integral(S, {}, q, true);
  EnergyTerms first, prev;
  double balance_integral = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto& snap = s[k];
    const auto e = energy_terms(snap.p, snap.m, &S, prm.gamma);
    GlobalEnergyRow row;
    row.t = snap.t;
    row.dirichlet_residual = dirichlet_identity_residual(snap.p, snap.m, S);
    row.lyapunov = lyapunov_value(e, prm);
    row.max_abs_p = snap.p.max_abs();
    row.c1_ratio = rep.source_norm > 0.0 ? row.max_abs_p / rep.source_norm : 0.0;
    if (k == 0) {
      first = e;
    } else {
      const auto& last = rep.rows.back();
      const double dt = snap.t - s[k - 1].t;
      double dm = 0.0;
      for (std::size_t j = 0; j < snap.m.values.size(); ++j) {
        const double d = snap.m.values[j] - s[k - 1].m.values[j];
        dm += d * d;
      }
      row.cum_dtm_sq = last.cum_dtm_sq + dm * snap.m.grid.cell_volume() / dt;
      row.cum_grad_m_sq = last.cum_grad_m_sq + 0.5 * dt * (e.grad_m_sq + prev.grad_m_sq);
      row.cum_aniso = last.cum_aniso + 0.5 * dt * (e.aniso + prev.aniso);
      row.cum_m_pow = last.cum_m_pow + 0.5 * dt * (e.m_pow + prev.m_pow);
      row.cum_grad_p_sq = last.cum_grad_p_sq + 0.5 * dt * (e.grad_p_sq + prev.grad_p_sq);
      balance_integral += 0.5 * dt * (balance_rate(e, prm) + balance_rate(prev, prm));
    }
    row.balance_defect = 0.5 * e.m_sq + balance_integral - 0.5 * first.m_sq;
    rep.c1_constant = std::max(rep.c1_constant, row.c1_ratio);
    rep.rows.push_back(row);
    prev = e;
  }
  return rep;
}

inline void write_energy_csv(const std::string& path, const GlobalEnergyReport& rep) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << std::setprecision(17);
  out << "t,dirichlet_residual,lyapunov,balance_defect,max_abs_p,c1_ratio,cum_dtm_sq,cum_grad_m_sq,cum_aniso,"
         "cum_m_pow,cum_grad_p_sq\n";
  for (const auto& r : rep.rows)
    out << r.t << ',' << r.dirichlet_residual << ',' << r.lyapunov << ',' << r.balance_defect << ',' << r.max_abs_p
        << ',' << r.c1_ratio << ',' << r.cum_dtm_sq << ',' << r.cum_grad_m_sq << ',' << r.cum_aniso << ','
        << r.cum_m_pow << ',' << r.cum_grad_p_sq << '\n';
}

/// Phi(x) = int_0^x [(s - K^2)^+ + K^2]^beta ds in closed form.
inline double truncation_potential(double x, double K, double beta) {
  const double k2 = K * K;
  if (x <= k2) return std::pow(k2, beta) * x;
  return std::pow(k2, beta + 1.0) + (std::pow(x, beta + 1.0) - std::pow(k2, beta + 1.0)) / (beta + 1.0);
}

/// Spatial integrals of the truncated energy inequality at one time.
struct TruncationRow {
  double t = 0.0;
  double grad_m = 0.0;     // v^beta |grad m|^2
  double grad_v = 0.0;     // v^{beta-1} |grad v|^2
  double m_pow = 0.0;      // |m|^{2 gamma} v^beta
  double grad_p = 0.0;     // v^beta |grad p|^2
  double aniso = 0.0;      // v^beta (m . grad p)^2
  double potential = 0.0;  // Phi(|m|^2)
  double v_min = 0.0;
  double v_max = 0.0;
};

struct TruncationProfile {
  double K = 0.0;
  double beta = 0.0;
  std::vector<TruncationRow> rows;
  /// Time integrals (trapezoidal) of the first five columns.
  std::array<double, 5> cumulative{};
  bool finite() const {
    for (const auto& r : rows)
      for (double x : {r.grad_m, r.grad_v, r.m_pow, r.grad_p, r.aniso, r.potential})
        if (!std::isfinite(x)) return false;
    for (double x : cumulative)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

/// v = (|m|^2 - K^2)^+ + K^2 cellwise, then each weighted integral. Gradient
/// densities are the cell densities of the face quadratures; grad v is the face
/// gradient of v - K^2, which vanishes on the walls with m.
inline TruncationRow truncation_row(const Snapshot& snap, double K, double beta, double gamma) {
  const auto& g = snap.m.grid;
  const std::size_t cells = g.cell_count();
  const double k2 = K * K;
  ScalarField v(g), excess(g);
  TruncationRow row;
  row.t = snap.t;
  row.v_min = std::numeric_limits<double>::infinity();
  row.v_max = 0.0;
  for (std::size_t k = 0; k < cells; ++k) {
    const double m2 = snap.m.norm_sq_at(k);
    excess[k] = std::max(m2 - k2, 0.0);
    v[k] = excess[k] + k2;
    row.v_min = std::min(row.v_min, v[k]);
    row.v_max = std::max(row.v_max, v[k]);
  }
  PressureOperator op(snap.m);
  const auto dm = gradient_density(snap.m);
  const auto dv = gradient_density(excess);
  const auto dp = gradient_density(snap.p);
  const auto da = op.anisotropic_density(snap.p.values);
  for (std::size_t k = 0; k < cells; ++k) {
    const double vb = std::pow(v[k], beta);
    const double m2 = snap.m.norm_sq_at(k);
    row.grad_m += vb * dm[k];
    row.grad_v += vb / v[k] * dv[k];
    row.m_pow += std::pow(m2, gamma) * vb;
    row.grad_p += vb * dp[k];
    row.aniso += vb * da[k];
    row.potential += truncation_potential(m2, K, beta);
  }
  const double h = g.cell_volume();
  row.grad_m *= h;
  row.grad_v *= h;
  row.m_pow *= h;
  row.grad_p *= h;
  row.aniso *= h;
  row.potential *= h;
  return row;
}

inline TruncationProfile truncation_profile(const SpaceTimeSeries& s, double K, double beta, double gamma) {
  if (!(K > 0.0)) throw ConfigError("truncation level K must be positive");
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("truncation exponent must lie in (0, 1)");
  TruncationProfile prof;
  prof.K = K;
  prof.beta = beta;
  for (std::size_t k = 0; k < s.size(); ++k) {
    prof.rows.push_back(truncation_row(s[k], K, beta, gamma));
    if (k == 0) continue;
    const auto& a = prof.rows[k - 1];
    const auto& b = prof.rows[k];
    const double dt = b.t - a.t;
    prof.cumulative[0] += 0.5 * dt * (a.grad_m + b.grad_m);
    prof.cumulative[1] += 0.5 * dt * (a.grad_v + b.grad_v);
    prof.cumulative[2] += 0.5 * dt * (a.m_pow + b.m_pow);
    prof.cumulative[3] += 0.5 * dt * (a.grad_p + b.grad_p);
    prof.cumulative[4] += 0.5 * dt * (a.aniso + b.aniso);
  }
  return prof;
}

/// Profiles over the default exponent sweep.
inline std::vector<TruncationProfile> truncation_sweep(const SpaceTimeSeries& s, double K, double gamma,
                                                       const std::vector<double>& betas = {0.05, 0.1, 0.2}) {
  std::vector<TruncationProfile> out;
  for (double b : betas) out.push_back(truncation_profile(s, K, b, gamma));
  return out;
}

inline void write_truncation_csv(const std::string& path, const std::vector<TruncationProfile>& profiles) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << std::setprecision(17);
  out << "K,beta,t,grad_m,grad_v,m_pow,grad_p,aniso,potential,v_min,v_max\n";
  for (const auto& p : profiles)
    for (const auto& r : p.rows)
      out << p.K << ',' << p.beta << ',' << r.t << ',' << r.grad_m << ',' << r.grad_v << ',' << r.m_pow << ','
          << r.grad_p << ',' << r.aniso << ',' << r.potential << ',' << r.v_min << ',' << r.v_max << '\n';
}

}  // namespace hcns
