#pragma once

// Discrete differential operators on the cell-centered grid.
//
// The homogeneous Dirichlet condition is imposed by odd reflection across each
// wall, so the extended field is zero on the wall face itself. Two operator
// pairs are provided:
//   * staggered: face_gradient (cells -> faces) and face_divergence (faces ->
//     cells); laplacian = face_divergence o face_gradient (compact stencil).
//   * collocated: gradient (cells -> cell vectors, central differences) and
//     divergence (cell vectors -> cells).
// Within each pair the divergence is the negative adjoint of the gradient for
// the inner products <u, v> = sum u v h^N on cells and sum w_f F G on faces,
// where w_f = h^N on interior faces and h^N / 2 on wall faces.

#include <span>
#include <vector>

#include "hcns/field.hpp"

namespace hcns {

namespace ops {

/// Calls f(line, base, stride, n) for every grid line along `axis`.
template <class F>
void for_each_line(const GridSpec& g, int axis, F&& f) {
  const std::size_t stride = g.stride(axis);
  const int n = g.cells(axis);
  std::size_t line = 0;
  Index i{};
  for (i[0] = 0; i[0] < (axis == 0 ? 1 : g.cells(0)); ++i[0])
    for (i[1] = 0; i[1] < (axis == 1 ? 1 : g.cells(1)); ++i[1])
      for (i[2] = 0; i[2] < (axis == 2 ? 1 : g.cells(2)); ++i[2]) f(line++, g.flat(i), stride, n);
}

/// faces[a] = G_a u, one-sided against the reflected ghost at the walls.
inline void face_gradient_axis(const GridSpec& g, int a, std::span<const double> u, std::span<double> faces) {
  const double inv_h = 1.0 / g.spacing(a);
  for_each_line(g, a, [&](std::size_t line, std::size_t base, std::size_t s, int n) {
    double* f = faces.data() + line * (n + 1);
    const double* c = u.data() + base;
    f[0] = 2.0 * c[0] * inv_h;
    for (int j = 1; j < n; ++j) f[j] = (c[j * s] - c[(j - 1) * s]) * inv_h;
    f[n] = -2.0 * c[(n - 1) * s] * inv_h;
  });
}

/// out += scale * D_a F, with (D_a F)_j = (F_{j+1} - F_j) / h.
inline void face_divergence_axis_add(const GridSpec& g, int a, std::span<const double> faces, std::span<double> out,
                                     double scale = 1.0) {
  const double k = scale / g.spacing(a);
  for_each_line(g, a, [&](std::size_t line, std::size_t base, std::size_t s, int n) {
    const double* f = faces.data() + line * (n + 1);
    double* o = out.data() + base;
    for (int j = 0; j < n; ++j) o[j * s] += k * (f[j + 1] - f[j]);
  });
}

/// out = C_a u, the average of the two adjacent face gradients.
inline void central_diff_axis(const GridSpec& g, int a, std::span<const double> u, std::span<double> out) {
  const double inv_2h = 0.5 / g.spacing(a);
  for_each_line(g, a, [&](std::size_t, std::size_t base, std::size_t s, int n) {
    const double* c = u.data() + base;
    double* o = out.data() + base;
    o[0] = (c[s] + c[0]) * inv_2h;
    for (int j = 1; j < n - 1; ++j) o[j * s] = (c[(j + 1) * s] - c[(j - 1) * s]) * inv_2h;
    o[(n - 1) * s] = (-c[(n - 1) * s] - c[(n - 2) * s]) * inv_2h;
  });
}

/// out += scale * C_a^* v (weighted adjoint of central_diff_axis).
inline void central_diff_axis_adjoint_add(const GridSpec& g, int a, std::span<const double> v, std::span<double> out,
                                          double scale = 1.0) {
  const double k = scale * 0.5 / g.spacing(a);
  for_each_line(g, a, [&](std::size_t, std::size_t base, std::size_t s, int n) {
    const double* c = v.data() + base;
    double* o = out.data() + base;
    o[0] -= k * (c[s] - c[0]);
    for (int j = 1; j < n - 1; ++j) o[j * s] -= k * (c[(j + 1) * s] - c[(j - 1) * s]);
    o[(n - 1) * s] -= k * (c[(n - 1) * s] - c[(n - 2) * s]);
  });
}

/// faces = A_a u: arithmetic mean of the two adjacent cells, zero on the walls.
inline void interp_to_faces_axis(const GridSpec& g, int a, std::span<const double> u, std::span<double> faces) {
  for_each_line(g, a, [&](std::size_t line, std::size_t base, std::size_t s, int n) {
    double* f = faces.data() + line * (n + 1);
    const double* c = u.data() + base;
    f[0] = 0.0;
    for (int j = 1; j < n; ++j) f[j] = 0.5 * (c[j * s] + c[(j - 1) * s]);
    f[n] = 0.0;
  });
}

/// out += scale * A_a^* F (weighted adjoint of interp_to_faces_axis).
inline void interp_to_faces_axis_adjoint_add(const GridSpec& g, int a, std::span<const double> faces,
                                             std::span<double> out, double scale = 1.0) {
  const double k = 0.5 * scale;
  for_each_line(g, a, [&](std::size_t line, std::size_t base, std::size_t s, int n) {
    const double* f = faces.data() + line * (n + 1);
    double* o = out.data() + base;
    o[0] += k * f[1];
    for (int j = 1; j < n - 1; ++j) o[j * s] += k * (f[j] + f[j + 1]);
    o[(n - 1) * s] += k * f[n - 1];
  });
}

/// faces = B_a u: arithmetic mean of the two adjacent cells, the adjacent cell
/// value on the walls. Used for coefficients, which carry no boundary condition.
inline void coefficient_to_faces_axis(const GridSpec& g, int a, std::span<const double> u, std::span<double> faces) {
  for_each_line(g, a, [&](std::size_t line, std::size_t base, std::size_t s, int n) {
    double* f = faces.data() + line * (n + 1);
    const double* c = u.data() + base;
    f[0] = c[0];
    for (int j = 1; j < n; ++j) f[j] = 0.5 * (c[j * s] + c[(j - 1) * s]);
    f[n] = c[(n - 1) * s];
  });
}

/// out += scale * B_a^* F = scale * (F_j + F_{j+1}) / 2 (weighted adjoint of coefficient_to_faces_axis).
inline void coefficient_to_faces_axis_adjoint_add(const GridSpec& g, int a, std::span<const double> faces,
                                                  std::span<double> out, double scale = 1.0) {
  const double k = 0.5 * scale;
  for_each_line(g, a, [&](std::size_t line, std::size_t base, std::size_t s, int n) {
    const double* f = faces.data() + line * (n + 1);
    double* o = out.data() + base;
    for (int j = 0; j < n; ++j) o[j * s] += k * (f[j] + f[j + 1]);
  });
}

/// Quadrature weight of every face along `a`, relative to h^N.
inline double face_weight(int j, int n) noexcept { return (j == 0 || j == n) ? 0.5 : 1.0; }

/// sum_f w_f x_f y_f / h^N over the faces normal to axis a.
inline double face_dot(const GridSpec& g, int a, std::span<const double> x, std::span<const double> y) {
  const int n = g.cells(a);
  const std::size_t lines = g.cell_count() / n;
  double s = 0.0;
  for (std::size_t line = 0; line < lines; ++line) {
    const double* xf = x.data() + line * (n + 1);
    const double* yf = y.data() + line * (n + 1);
    s += 0.5 * (xf[0] * yf[0] + xf[n] * yf[n]);
    for (int j = 1; j < n; ++j) s += xf[j] * yf[j];
  }
  return s;
}

}  // namespace ops

/// Staggered gradient: normal derivative on every face.
inline FaceField face_gradient(const ScalarField& u) {
  require_finite(u, "face_gradient");
  FaceField f(u.grid);
  for (int a = 0; a < u.grid.dim(); ++a) ops::face_gradient_axis(u.grid, a, u.values, f.values[a]);
  return f;
}

/// Staggered divergence, the negative adjoint of face_gradient.
inline ScalarField face_divergence(const FaceField& f) {
  ScalarField out(f.grid);
  for (int a = 0; a < f.grid.dim(); ++a) {
    if (f.values[a].size() != FaceField::face_count(f.grid, a)) throw ShapeError("face_divergence: face count mismatch");
    detail::check_finite(f.values[a], "face_divergence");
    ops::face_divergence_axis_add(f.grid, a, f.values[a], out.values);
  }
  return out;
}

/// Compact (2N+1)-point Laplacian with homogeneous Dirichlet walls.
inline ScalarField laplacian(const ScalarField& u) { return face_divergence(face_gradient(u)); }

/// Collocated central-difference gradient.
inline VectorField gradient(const ScalarField& u) {
  require_finite(u, "gradient");
  VectorField g(u.grid);
  for (int a = 0; a < u.grid.dim(); ++a) ops::central_diff_axis(u.grid, a, u.values, g.component(a));
  return g;
}

/// Collocated divergence, the negative adjoint of `gradient`.
inline ScalarField divergence(const VectorField& v) {
  require_finite(v, "divergence");
  ScalarField out(v.grid);
  for (int a = 0; a < v.grid.dim(); ++a) ops::central_diff_axis_adjoint_add(v.grid, a, v.component(a), out.values, -1.0);
  return out;
}

/// Cell density of |grad u|^2: sum_a B_a^*(|G_a u|^2). Its plain cell sum times
/// h^N equals the face quadrature sum_f w_f |G u|^2 exactly.
inline ScalarField gradient_density(const ScalarField& u) {
  ScalarField out(u.grid);
  std::vector<double> f;
  for (int a = 0; a < u.grid.dim(); ++a) {
    f.assign(FaceField::face_count(u.grid, a), 0.0);
    ops::face_gradient_axis(u.grid, a, u.values, f);
    for (auto& x : f) x *= x;
    ops::coefficient_to_faces_axis_adjoint_add(u.grid, a, f, out.values);
  }
  return out;
}

/// Cell density of |grad m|^2 summed over components.
inline ScalarField gradient_density(const VectorField& m) {
  ScalarField out(m.grid);
  for (int c = 0; c < m.components(); ++c) {
    auto d = gradient_density(m.component_field(c));
    for (std::size_t k = 0; k < d.size(); ++k) out[k] += d[k];
  }
  return out;
}

enum class OperatorKind { Gradient, Divergence, Laplacian };

/// Cell inner product sum u v h^N.
inline double inner(const ScalarField& u, const ScalarField& v) {
  require_same_grid(u.grid, v.grid, "inner");
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * v[k];
  return s * u.grid.cell_volume();
}

inline double inner(const VectorField& u, const VectorField& v) {
  require_same_grid(u.grid, v.grid, "inner");
  double s = 0.0;
  for (std::size_t k = 0; k < u.values.size(); ++k) s += u.values[k] * v.values[k];
  return s * u.grid.cell_volume();
}

/// Face inner product sum_a sum_f w_f F G.
inline double inner(const FaceField& u, const FaceField& v) {
  require_same_grid(u.grid, v.grid, "inner");
  double s = 0.0;
  for (int a = 0; a < u.grid.dim(); ++a) s += ops::face_dot(u.grid, a, u.values[a], v.values[a]);
  return s * u.grid.cell_volume();
}

}  // namespace hcns
