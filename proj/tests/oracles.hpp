#pragma once

// Test-only reference implementations: dense matrices and brute-force sums
// written independently of the matrix-free kernels they check.

#include <cmath>
#include <random>
#include <vector>

#include "hcns/field.hpp"
#include "hcns/series.hpp"

namespace oracle {

struct Dense {
  int rows = 0, cols = 0;
  std::vector<double> a;
  Dense(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

  std::vector<double> mul(const std::vector<double>& x) const {
    std::vector<double> y(rows, 0.0);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) y[i] += (*this)(i, j) * x[j];
    return y;
  }
  Dense transpose() const {
    Dense t(cols, rows);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
    return t;
  }
  Dense operator*(const Dense& o) const {
    Dense r(rows, o.cols);
    for (int i = 0; i < rows; ++i)
      for (int k = 0; k < cols; ++k) {
        const double v = (*this)(i, k);
        if (v == 0.0) continue;
        for (int j = 0; j < o.cols; ++j) r(i, j) += v * o(k, j);
      }
    return r;
  }
  Dense& operator+=(const Dense& o) {
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += o.a[k];
    return *this;
  }
};

/// Gaussian elimination with partial pivoting.
inline std::vector<double> solve(Dense A, std::vector<double> b) {
  const int n = A.rows;
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(A(r, c)) > std::abs(A(piv, c))) piv = r;
    if (piv != c) {
      for (int j = 0; j < n; ++j) std::swap(A(c, j), A(piv, j));
      std::swap(b[c], b[piv]);
    }
    for (int r = c + 1; r < n; ++r) {
      const double f = A(r, c) / A(c, c);
      if (f == 0.0) continue;
      for (int j = c; j < n; ++j) A(r, j) -= f * A(c, j);
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int j = r + 1; j < n; ++j) s -= A(r, j) * x[j];
    x[r] = s / A(r, r);
  }
  return x;
}

inline int cell_index(const hcns::GridSpec& g, hcns::Index i) { return static_cast<int>(g.flat(i)); }

/// Enumerates the faces normal to axis a as (face row, low cell or -1, high cell or -1).
struct FaceRef {
  int row, lo, hi;
  bool wall;
};

inline std::vector<FaceRef> faces(const hcns::GridSpec& g, int a) {
  std::vector<FaceRef> out;
  const int n = g.cells(a);
  int row = 0;
  hcns::Index i{};
  for (i[0] = 0; i[0] < (a == 0 ? 1 : g.cells(0)); ++i[0])
    for (i[1] = 0; i[1] < (a == 1 ? 1 : g.cells(1)); ++i[1])
      for (i[2] = 0; i[2] < (a == 2 ? 1 : g.cells(2)); ++i[2])
        for (int j = 0; j <= n; ++j) {
          hcns::Index lo = i, hi = i;
          lo[a] = j - 1;
          hi[a] = j;
          out.push_back({row++, j > 0 ? cell_index(g, lo) : -1, j < n ? cell_index(g, hi) : -1, j == 0 || j == n});
        }
  return out;
}

/// Face gradient along a with the odd-reflection ghost.
inline Dense face_gradient(const hcns::GridSpec& g, int a) {
  auto fs = faces(g, a);
  Dense G(static_cast<int>(fs.size()), static_cast<int>(g.cell_count()));
  const double h = g.spacing(a);
  for (auto& f : fs) {
    if (f.lo >= 0 && f.hi >= 0) {
      G(f.row, f.hi) = 1.0 / h;
      G(f.row, f.lo) = -1.0 / h;
    } else if (f.hi >= 0) {
      G(f.row, f.hi) = 2.0 / h;  // u - (-u)
    } else {
      G(f.row, f.lo) = -2.0 / h;
    }
  }
  return G;
}

/// Relative face weights (1 interior, 1/2 on walls).
inline std::vector<double> face_weights(const hcns::GridSpec& g, int a) {
  std::vector<double> w;
  for (auto& f : faces(g, a)) w.push_back(f.wall ? 0.5 : 1.0);
  return w;
}

/// Central difference along b with ghosts u(-1) = -u(0), u(n) = -u(n-1).
inline Dense central_diff(const hcns::GridSpec& g, int b) {
  const int nc = static_cast<int>(g.cell_count());
  Dense C(nc, nc);
  const double h = g.spacing(b);
  for (int k = 0; k < nc; ++k) {
    auto i = g.unflat(k);
    auto up = i, dn = i;
    up[b] += 1;
    dn[b] -= 1;
    if (up[b] < g.cells(b)) C(k, cell_index(g, up)) += 0.5 / h;
    else C(k, k) += -0.5 / h;
    if (dn[b] >= 0) C(k, cell_index(g, dn)) -= 0.5 / h;
    else C(k, k) -= -0.5 / h;
  }
  return C;
}

/// Face interpolation along a, zero on the walls.
inline Dense face_interp(const hcns::GridSpec& g, int a) {
  auto fs = faces(g, a);
  Dense A(static_cast<int>(fs.size()), static_cast<int>(g.cell_count()));
  for (auto& f : fs)
    if (f.lo >= 0 && f.hi >= 0) {
      A(f.row, f.lo) = 0.5;
      A(f.row, f.hi) = 0.5;
    }
  return A;
}

/// Coefficient interpolation along a: mean inside, adjacent cell on the walls.
inline Dense coef_interp(const hcns::GridSpec& g, int a) {
  auto fs = faces(g, a);
  Dense A(static_cast<int>(fs.size()), static_cast<int>(g.cell_count()));
  for (auto& f : fs) {
    if (f.lo >= 0 && f.hi >= 0) {
      A(f.row, f.lo) = 0.5;
      A(f.row, f.hi) = 0.5;
    } else {
      A(f.row, f.lo >= 0 ? f.lo : f.hi) = 1.0;
    }
  }
  return A;
}

/// Dense pressure matrix built as sum G^T W G + (1/N) sum K^T W (m m^T) K.
inline Dense pressure_matrix(const hcns::VectorField& m) {
  const auto& g = m.grid;
  const int n = g.dim();
  const int nc = static_cast<int>(g.cell_count());
  Dense A(nc, nc);
  std::vector<Dense> C;
  for (int b = 0; b < n; ++b) C.push_back(central_diff(g, b));
  for (int a = 0; a < n; ++a) {
    Dense G = face_gradient(g, a);
    Dense If = face_interp(g, a);
    Dense Bf = coef_interp(g, a);
    auto w = face_weights(g, a);
    const int nf = G.rows;
    std::vector<Dense> K;
    for (int c = 0; c < n; ++c) K.push_back(c == a ? G : If * C[c]);
    std::vector<std::vector<double>> mf;
    for (int c = 0; c < n; ++c) {
      auto comp = m.component(c);
      mf.push_back(Bf.mul(std::vector<double>(comp.begin(), comp.end())));
    }
    // Rows: sqrt(w_f) (G_f) and sqrt(w_f / N) (sum_c m_c K_c)_f.
    Dense R(2 * nf, nc);
    for (int f = 0; f < nf; ++f)
      for (int i = 0; i < nc; ++i) {
        R(f, i) = std::sqrt(w[f]) * G(f, i);
        double k = 0.0;
        for (int c = 0; c < n; ++c) k += mf[c][f] * K[c](f, i);
        R(nf + f, i) = std::sqrt(w[f] / n) * k;
      }
    A += R.transpose() * R;
  }
  return A;
}

/// Dense coupling force (1/N) sum_a B_a^T W [(m_f . g_f) g_f], relative weights.
inline std::vector<double> coupling_force(const hcns::VectorField& m, const std::vector<double>& p) {
  const auto& g = m.grid;
  const int n = g.dim();
  const int nc = static_cast<int>(g.cell_count());
  std::vector<double> out(static_cast<std::size_t>(n) * nc, 0.0);
  for (int a = 0; a < n; ++a) {
    Dense Bf = coef_interp(g, a);
    Dense If = face_interp(g, a);
    auto w = face_weights(g, a);
    std::vector<std::vector<double>> gf, mf;
    for (int c = 0; c < n; ++c) {
      gf.push_back(c == a ? face_gradient(g, a).mul(p) : If.mul(central_diff(g, c).mul(p)));
      auto comp = m.component(c);
      mf.push_back(Bf.mul(std::vector<double>(comp.begin(), comp.end())));
    }
    Dense Bt = Bf.transpose();
    for (int c = 0; c < n; ++c) {
      std::vector<double> F(w.size());
      for (std::size_t f = 0; f < w.size(); ++f) {
        double s = 0.0;
        for (int d = 0; d < n; ++d) s += mf[d][f] * gf[d][f];
        F[f] = w[f] * s * gf[c][f];
      }
      auto r = Bt.mul(F);
      for (int k = 0; k < nc; ++k) out[static_cast<std::size_t>(c) * nc + k] += r[k] / n;
    }
  }
  return out;
}

/// Compact Laplacian stencil with odd-reflection walls.
inline Dense laplacian_matrix(const hcns::GridSpec& g) {
  const int nc = static_cast<int>(g.cell_count());
  Dense L(nc, nc);
  for (int k = 0; k < nc; ++k) {
    auto i = g.unflat(k);
    for (int a = 0; a < g.dim(); ++a) {
      const double h2 = g.spacing(a) * g.spacing(a);
      for (int s : {-1, 1}) {
        auto j = i;
        j[a] += s;
        if (j[a] < 0 || j[a] >= g.cells(a)) {
          L(k, k) -= 2.0 / h2;  // ghost = -u
        } else {
          L(k, k) -= 1.0 / h2;
          L(k, cell_index(g, j)) += 1.0 / h2;
        }
      }
    }
  }
  return L;
}

inline hcns::ScalarField random_scalar(const hcns::GridSpec& g, std::mt19937_64& rng, double lo = -1.0,
                                       double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  hcns::ScalarField f(g);
  for (auto& v : f.values) v = u(rng);
  return f;
}

inline hcns::VectorField random_vector(const hcns::GridSpec& g, std::mt19937_64& rng, double lo = -1.0,
                                       double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  hcns::VectorField f(g);
  for (auto& v : f.values) v = u(rng);
  return f;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

/// Random series with strictly increasing times on [0, T].
inline hcns::SpaceTimeSeries random_series(const hcns::GridSpec& g, int snapshots, double T, std::mt19937_64& rng) {
  hcns::SpaceTimeSeries s(g, T);
  std::uniform_real_distribution<double> jitter(0.2, 1.0);
  std::vector<double> gaps;
  double total = 0.0;
  for (int k = 0; k + 1 < snapshots; ++k) {
    gaps.push_back(jitter(rng));
    total += gaps.back();
  }
  double t = 0.0;
  for (int k = 0; k < snapshots; ++k) {
    s.push_back({t, random_scalar(g, rng), random_vector(g, rng)});
    if (k + 1 < snapshots) t += gaps[k] / total * T;
    if (k + 2 == snapshots) t = T;
  }
  return s;
}

/// sum_a sum_f w_f (G_a u)_f^2 h^N for every component of u.
inline double gradient_energy(const hcns::GridSpec& g, const std::vector<double>& u, int comps = 1) {
  const std::size_t nc = g.cell_count();
  double s = 0.0;
  for (int c = 0; c < comps; ++c) {
    std::vector<double> uc(u.begin() + c * nc, u.begin() + (c + 1) * nc);
    for (int a = 0; a < g.dim(); ++a) {
      auto gu = face_gradient(g, a).mul(uc);
      auto w = face_weights(g, a);
      for (std::size_t f = 0; f < gu.size(); ++f) s += w[f] * gu[f] * gu[f];
    }
  }
  return s * g.cell_volume();
}

/// Lyapunov functional from dense matrices: p^T A p h^N splits into |grad p|^2 + (m . grad p)^2.
inline double lyapunov(const hcns::ScalarField& p, const hcns::VectorField& m, double D, double E, double gamma) {
  const auto& g = p.grid;
  const auto Ap = pressure_matrix(m).mul(p.values);
  double quad = 0.0;
  for (std::size_t k = 0; k < Ap.size(); ++k) quad += p.values[k] * Ap[k];
  quad *= g.cell_volume();
  double pw = 0.0;
  for (std::size_t k = 0; k < g.cell_count(); ++k) {
    double r2 = 0.0;
    for (int c = 0; c < g.dim(); ++c) r2 += m.at(c, k) * m.at(c, k);
    pw += std::pow(r2, gamma);
  }
  pw *= g.cell_volume();
  return 0.5 * D * D * gradient_energy(g, m.values, g.dim()) + 0.5 * E * E * quad + pw / (2.0 * gamma);
}

}  // namespace oracle
