#pragma once

// Matrix-free pressure operator  v -> -div[(I + m (x) m) grad v]  with p = 0 on the walls.
//
// The operator is defined through its bilinear form
//   a(u, v) = sum_faces w_f Gu Gv
//           + (1/N) sum_a sum_{a-faces} w_f (m_f . K_a u)(m_f . K_a v),
// where G is the staggered face gradient, K_a u is the full gradient vector on
// the faces normal to axis a (normal part from G, tangential parts from face
// averages of central differences), and m_f is the face average of m (the
// adjacent cell value on wall faces). Each face
// family gives a quadrature of the integral of (m . grad u)(m . grad v); their
// mean keeps the form symmetric with a(v, v) >= |Gv|^2. The flux on an a-face is
// therefore grad v + (m . grad v) m with face-averaged m.

#include <array>
#include <chrono>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "hcns/cg.hpp"
#include "hcns/operators.hpp"

namespace hcns {

class PressureOperator {
 public:
  /// Coefficient I + m (x) m with m averaged onto faces.
  explicit PressureOperator(const VectorField& m) : grid_(m.grid) {
    require_finite(m, "pressure operator coefficient");
    const int n = grid_.dim();
    for (int a = 0; a < n; ++a) {
      mf_[a].resize(n);
      for (int c = 0; c < n; ++c) {
        mf_[a][c].assign(FaceField::face_count(grid_, a), 0.0);
        ops::coefficient_to_faces_axis(grid_, a, m.component(c), mf_[a][c]);
      }
    }
    max_m_sq_ = m.max_abs() * m.max_abs();
  }

  /// Frozen constant coefficient I + a (x) a on every face.
  PressureOperator(const GridSpec& g, const std::vector<double>& a) : grid_(g) {
    if (static_cast<int>(a.size()) != g.dim()) throw ShapeError("constant coefficient must have N components");
    const int n = grid_.dim();
    double s = 0.0;
    for (int c = 0; c < n; ++c) s += a[c] * a[c];
    for (int f = 0; f < n; ++f) {
      mf_[f].resize(n);
      for (int c = 0; c < n; ++c) mf_[f][c].assign(FaceField::face_count(grid_, f), a[c]);
    }
    max_m_sq_ = s;
  }

  const GridSpec& grid() const noexcept { return grid_; }

  /// max |m|^2, the conditioning indicator (eigenvalues of I + m (x) m lie in [1, 1 + |m|^2]).
  double max_coefficient_sq() const noexcept { return max_m_sq_; }

  void apply(std::span<const double> v, std::span<double> out) const {
    const int n = grid_.dim();
    const std::size_t cells = grid_.cell_count();
    for (auto& o : out) o = 0.0;

    std::array<std::vector<double>, 3> cd, tb;
    for (int b = 0; b < n; ++b) {
      cd[b].assign(cells, 0.0);
      tb[b].assign(cells, 0.0);
      ops::central_diff_axis(grid_, b, v, cd[b]);
    }
    std::array<std::vector<double>, 3> g;
    const double inv_n = 1.0 / n;
    for (int a = 0; a < n; ++a) {
      const std::size_t nf = FaceField::face_count(grid_, a);
      face_gradient_vector(a, v, cd, g);
      // Isotropic part: -D_a G_a v.
      ops::face_divergence_axis_add(grid_, a, g[a], out, -1.0);
      // Anisotropic flux (1/N)(m_f . g_f) m_f, pulled back through K_a^*.
      for (std::size_t f = 0; f < nf; ++f) {
        double s = 0.0;
        for (int c = 0; c < n; ++c) s += mf_[a][c][f] * g[c][f];
        s *= inv_n;
        for (int c = 0; c < n; ++c) g[c][f] = s * mf_[a][c][f];
      }
      ops::face_divergence_axis_add(grid_, a, g[a], out, -1.0);
      for (int b = 0; b < n; ++b)
        if (b != a) ops::interp_to_faces_axis_adjoint_add(grid_, a, g[b], tb[b]);
    }
    for (int b = 0; b < n; ++b) ops::central_diff_axis_adjoint_add(grid_, b, tb[b], out);
  }

  ScalarField apply(const ScalarField& v) const {
    require_same_grid(v.grid, grid_, "pressure operator");
    require_finite(v, "pressure operator input");
    ScalarField out(grid_);
    apply(v.values, out.values);
    return out;
  }

  /// Exact diagonal, probed with a period-3 colouring (the stencil reaches 2 cells per axis).
  std::vector<double> diagonal() const {
    const std::size_t cells = grid_.cell_count();
    std::vector<double> diag(cells, 0.0), probe(cells), resp(cells);
    const int colours = grid_.dim() == 1 ? 3 : (grid_.dim() == 2 ? 9 : 27);
    for (int colour = 0; colour < colours; ++colour) {
      const Index want{colour % 3, (colour / 3) % 3, colour / 9};
      for (std::size_t k = 0; k < cells; ++k) {
        const Index i = grid_.unflat(k);
        bool on = true;
        for (int a = 0; a < grid_.dim(); ++a) on = on && (i[a] % 3 == want[a]);
        probe[k] = on ? 1.0 : 0.0;
      }
      apply(probe, resp);
      for (std::size_t k = 0; k < cells; ++k)
        if (probe[k] != 0.0) diag[k] = resp[k];
    }
    return diag;
  }

  /// sum_faces w_f |G v|^2 (the discrete integral of |grad v|^2).
  double gradient_energy(std::span<const double> v) const {
    double s = 0.0;
    std::vector<double> f;
    for (int a = 0; a < grid_.dim(); ++a) {
      f.assign(FaceField::face_count(grid_, a), 0.0);
      ops::face_gradient_axis(grid_, a, v, f);
      s += ops::face_dot(grid_, a, f, f);
    }
    return s * grid_.cell_volume();
  }

  /// (1/N) sum_a sum_{a-faces} w_f (m_f . K_a v)^2 (the discrete integral of (m . grad v)^2).
  double anisotropic_energy(std::span<const double> v) const {
    const int n = grid_.dim();
    std::array<std::vector<double>, 3> cd, g;
    for (int b = 0; b < n; ++b) {
      cd[b].assign(grid_.cell_count(), 0.0);
      ops::central_diff_axis(grid_, b, v, cd[b]);
    }
    double total = 0.0;
    for (int a = 0; a < n; ++a) {
      face_gradient_vector(a, v, cd, g);
      std::vector<double> s(FaceField::face_count(grid_, a));
      for (std::size_t f = 0; f < s.size(); ++f) {
        double x = 0.0;
        for (int c = 0; c < n; ++c) x += mf_[a][c][f] * g[c][f];
        s[f] = x;
      }
      total += ops::face_dot(grid_, a, s, s);
    }
    return total / n * grid_.cell_volume();
  }

  /// Discrete (m . grad p) grad p: the cell field whose inner product with m
  /// equals anisotropic_energy(p), i.e. minus the m-derivative of the pressure
  /// energy (1/2) sum S p. Computed as (1/N) sum_a B_a^*[(m_f . g_f) g_f].
  VectorField coupling_force(std::span<const double> p) const {
    const int n = grid_.dim();
    std::array<std::vector<double>, 3> cd, g;
    for (int b = 0; b < n; ++b) {
      cd[b].assign(grid_.cell_count(), 0.0);
      ops::central_diff_axis(grid_, b, p, cd[b]);
    }
    VectorField out(grid_);
    const double inv_n = 1.0 / n;
    for (int a = 0; a < n; ++a) {
      face_gradient_vector(a, p, cd, g);
      const std::size_t nf = FaceField::face_count(grid_, a);
      std::vector<double> s(nf);
      for (std::size_t f = 0; f < nf; ++f) {
        double x = 0.0;
        for (int c = 0; c < n; ++c) x += mf_[a][c][f] * g[c][f];
        s[f] = x * inv_n;
      }
      std::vector<double> flux(nf);
      for (int c = 0; c < n; ++c) {
        for (std::size_t f = 0; f < nf; ++f) flux[f] = s[f] * g[c][f];
        ops::coefficient_to_faces_axis_adjoint_add(grid_, a, flux, out.component(c));
      }
    }
    return out;
  }

  /// Cell density of (m . grad v)^2, (1/N) sum_a B_a^*[(m_f . g_f)^2]; sums to anisotropic_energy.
  ScalarField anisotropic_density(std::span<const double> v) const {
    const int n = grid_.dim();
    std::array<std::vector<double>, 3> cd, g;
    for (int b = 0; b < n; ++b) {
      cd[b].assign(grid_.cell_count(), 0.0);
      ops::central_diff_axis(grid_, b, v, cd[b]);
    }
    ScalarField out(grid_);
    for (int a = 0; a < n; ++a) {
      face_gradient_vector(a, v, cd, g);
      std::vector<double> s(FaceField::face_count(grid_, a));
      for (std::size_t f = 0; f < s.size(); ++f) {
        double x = 0.0;
        for (int c = 0; c < n; ++c) x += mf_[a][c][f] * g[c][f];
        s[f] = x * x / n;
      }
      ops::coefficient_to_faces_axis_adjoint_add(grid_, a, s, out.values);
    }
    return out;
  }

  /// max over faces of |K_a v|^2.
  double max_face_gradient_sq(std::span<const double> v) const {
    const int n = grid_.dim();
    std::array<std::vector<double>, 3> cd, g;
    for (int b = 0; b < n; ++b) {
      cd[b].assign(grid_.cell_count(), 0.0);
      ops::central_diff_axis(grid_, b, v, cd[b]);
    }
    double mx = 0.0;
    for (int a = 0; a < n; ++a) {
      face_gradient_vector(a, v, cd, g);
      for (std::size_t f = 0; f < g[a].size(); ++f) {
        double s = 0.0;
        for (int c = 0; c < n; ++c) s += g[c][f] * g[c][f];
        mx = std::max(mx, s);
      }
    }
    return mx;
  }

 private:
  /// g[c] = component c of K_a v on the faces normal to a; cd holds C_b v.
  void face_gradient_vector(int a, std::span<const double> v, const std::array<std::vector<double>, 3>& cd,
                            std::array<std::vector<double>, 3>& g) const {
    const std::size_t nf = FaceField::face_count(grid_, a);
    for (int c = 0; c < grid_.dim(); ++c) {
      g[c].assign(nf, 0.0);
      if (c == a)
        ops::face_gradient_axis(grid_, a, v, g[c]);
      else
        ops::interp_to_faces_axis(grid_, a, cd[c], g[c]);
    }
  }

  GridSpec grid_;
  std::array<std::vector<std::vector<double>>, 3> mf_;
  double max_m_sq_ = 0.0;
};

struct SolveReport {
  int iterations = 0;
  double final_residual = 0.0;
  double energy_identity_residual = 0.0;
  double wall_time = 0.0;
  double max_m_sq = 0.0;
  std::vector<double> residual_history;
};

struct PressureSolution {
  ScalarField p;
  SolveReport report;
};

/// Default iteration cap 50 * sqrt(cells).
inline int default_iteration_cap(const GridSpec& g) {
  return static_cast<int>(50.0 * std::sqrt(static_cast<double>(g.cell_count()))) + 1;
}

/// |sum |grad p|^2 + sum (m . grad p)^2 - sum S p| / max(1, sum S p), face quadrature.
inline double dirichlet_identity_residual(const PressureOperator& op, const ScalarField& p, const ScalarField& S) {
  const double lhs = op.gradient_energy(p.values) + op.anisotropic_energy(p.values);
  const double rhs = inner(S, p);
  return std::abs(lhs - rhs) / std::max(1.0, rhs);
}

inline double dirichlet_identity_residual(const ScalarField& p, const VectorField& m, const ScalarField& S) {
  require_same_grid(p.grid, m.grid, "dirichlet identity");
  require_same_grid(p.grid, S.grid, "dirichlet identity");
  return dirichlet_identity_residual(PressureOperator(m), p, S);
}

inline PressureSolution solve_pressure(const PressureOperator& op, const ScalarField& S, double tol,
                                       const ScalarField* warm_start = nullptr, int max_iterations = 0) {
  if (!(tol > 0.0)) throw ConfigError("solver tolerance must be positive");
  require_same_grid(op.grid(), S.grid, "solve_pressure");
  require_finite(S, "pressure source");
  const auto t0 = std::chrono::steady_clock::now();
  PressureSolution sol{ScalarField(op.grid()), {}};
  if (warm_start) {
    require_same_grid(warm_start->grid, S.grid, "solve_pressure warm start");
    sol.p.values = warm_start->values;
  }
  const auto diag = op.diagonal();
  const int cap = max_iterations > 0 ? max_iterations : default_iteration_cap(op.grid());
  auto res = conjugate_gradient([&](std::span<const double> x, std::span<double> y) { op.apply(x, y); }, diag,
                                S.values, sol.p.values, tol, cap);
  sol.report.iterations = res.iterations;
  sol.report.final_residual = res.relative_residual;
  sol.report.residual_history = std::move(res.history);
  sol.report.max_m_sq = op.max_coefficient_sq();
  sol.report.energy_identity_residual = dirichlet_identity_residual(op, sol.p, S);
  sol.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

/// Solve -div[(I + m (x) m) grad p] = S, p = 0 on the walls, by Jacobi-PCG to relative residual tol.
inline PressureSolution solve_pressure(const VectorField& m, const ScalarField& S, double tol,
                                       const ScalarField* warm_start = nullptr) {
  require_same_grid(m.grid, S.grid, "solve_pressure");
  return solve_pressure(PressureOperator(m), S, tol, warm_start);
}

/// p0 for the initial conductance m0; identical to solve_pressure from a zero guess.
inline ScalarField solve_initial_pressure(const VectorField& m0, const ScalarField& S, double tol) {
  return solve_pressure(m0, S, tol).p;
}

}  // namespace hcns
