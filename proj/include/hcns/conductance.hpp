#pragma once

#include <cmath>
#include <string>

#include "hcns/pressure.hpp"

namespace hcns {

/// Parameters of one conductance step.
struct StepParams {
  double D = 1.0;       // diffusion
  double E = 1.0;       // pressure coupling
  double gamma = 1.0;   // metabolic exponent, > 1/2
  double dt = 1e-3;
  double eps_m = 1e-12; // floor on |m| inside the metabolic factor

  void validate() const {
    if (!(D > 0.0) || !std::isfinite(D)) throw ConfigError("D must be positive (D > 0)");
    // E = 0 (uncoupled limit) is accepted for diagnostics.
    if (!(E >= 0.0) || !std::isfinite(E)) throw ConfigError("E must be non-negative");
    if (!(gamma > 0.5) || !std::isfinite(gamma))
      throw ConfigError("gamma must satisfy gamma > 1/2, got " + std::to_string(gamma));
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
    if (!(eps_m >= 0.0)) throw ConfigError("eps_m must be non-negative");
    if (gamma < 1.0 && !(eps_m > 0.0)) throw ConfigError("eps_m must be positive when gamma < 1");
  }
};

/// 1 / (1 + dt g^{2(gamma-1)}) with g = max(mag, eps_m): backward Euler for
/// m' = -|m|^{2(gamma-1)} m with the magnitude frozen.
inline double metabolic_factor(double mag, const StepParams& params) {
  const double expo = 2.0 * (params.gamma - 1.0);
  if (expo == 0.0) return 1.0 / (1.0 + params.dt);
  const double g = std::max(mag, params.eps_m);
  return 1.0 / (1.0 + params.dt * std::pow(g, expo));
}

struct StepOutcome {
  VectorField m;
  int cg_iterations = 0;
  double cfl_number = 0.0;  // dt E^2 max |grad p|^2
  bool cfl_warning = false;
};

/// Solve (I - dt D^2 Lap) x = rhs for one component.
inline int implicit_diffusion_solve(const GridSpec& g, double coeff, std::span<const double> rhs, std::span<double> x,
                                    double tol) {
  const std::size_t n = g.cell_count();
  std::vector<double> diag(n, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    const Index i = g.unflat(k);
    for (int a = 0; a < g.dim(); ++a) {
      const double h2 = g.spacing(a) * g.spacing(a);
      const bool wall = i[a] == 0 || i[a] == g.cells(a) - 1;
      diag[k] += coeff * (wall ? 3.0 : 2.0) / h2;
    }
  }
  std::vector<double> faces;
  auto apply = [&](std::span<const double> v, std::span<double> out) {
    for (std::size_t k = 0; k < n; ++k) out[k] = v[k];
    for (int a = 0; a < g.dim(); ++a) {
      faces.assign(FaceField::face_count(g, a), 0.0);
      ops::face_gradient_axis(g, a, v, faces);
      ops::face_divergence_axis_add(g, a, faces, out, -coeff);
    }
  };
  for (std::size_t k = 0; k < n; ++k) x[k] = rhs[k];
  return conjugate_gradient(apply, diag, rhs, x, tol, default_iteration_cap(g)).iterations;
}

/// One IMEX step of  dm/dt = D^2 Lap m + E^2 (m . grad p) grad p - |m|^{2(gamma-1)} m + forcing.
///
/// Order: explicit coupling (plus optional forcing), implicit diffusion by CG,
/// then the semi-implicit metabolic factor. `op` must be the pressure operator
/// built from `m`; the coupling term is its coupling_force(p).
inline StepOutcome advance_conductance(const PressureOperator& op, const VectorField& m, const ScalarField& p,
                                       const StepParams& params, double tol, const VectorField* forcing = nullptr) {
  params.validate();
  require_same_grid(m.grid, p.grid, "advance_conductance");
  require_same_grid(op.grid(), m.grid, "advance_conductance");
  require_finite(m, "advance_conductance m");
  require_finite(p, "advance_conductance p");
  const GridSpec& g = m.grid;
  const int n = g.dim();
  const std::size_t cells = g.cell_count();
  const double dt = params.dt;
  const double e2 = params.E * params.E;

  StepOutcome out;
  out.cfl_number = dt * e2 * op.max_face_gradient_sq(p.values);
  out.cfl_warning = out.cfl_number > 1.0;

  VectorField star = op.coupling_force(p.values);
  for (std::size_t k = 0; k < star.values.size(); ++k) {
    star.values[k] = m.values[k] + dt * e2 * star.values[k];
    if (forcing) star.values[k] += dt * forcing->values[k];
  }

  out.m = VectorField(g);
  const double coeff = dt * params.D * params.D;
  for (int c = 0; c < n; ++c)
    out.cg_iterations += implicit_diffusion_solve(g, coeff, star.component(c), out.m.component(c), tol);

  for (std::size_t k = 0; k < cells; ++k) {
    const double f = metabolic_factor(std::sqrt(out.m.norm_sq_at(k)), params);
    for (int c = 0; c < n; ++c) out.m.at(c, k) *= f;
  }
  return out;
}

inline StepOutcome advance_conductance(const VectorField& m, const ScalarField& p, const StepParams& params,
                                       double tol, const VectorField* forcing = nullptr) {
  return advance_conductance(PressureOperator(m), m, p, params, tol, forcing);
}

}  // namespace hcns
