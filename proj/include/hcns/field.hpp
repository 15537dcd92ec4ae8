#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hcns/grid.hpp"

namespace hcns {

/// One real per cell center, row-major.
struct ScalarField {
  GridSpec grid;
  std::vector<double> values;
  std::optional<double> time;

  ScalarField() = default;
  explicit ScalarField(const GridSpec& g, double fill = 0.0) : grid(g), values(g.cell_count(), fill) {}
  ScalarField(const GridSpec& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.cell_count()) throw ShapeError("scalar field: value count does not match grid");
  }

  template <class F>
  static ScalarField sample(const GridSpec& g, F&& f) {
    ScalarField s(g);
    for (std::size_t k = 0; k < s.size(); ++k) s.values[k] = f(g.center(k));
    return s;
  }

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t k) noexcept { return values[k]; }
  double operator[](std::size_t k) const noexcept { return values[k]; }

  double max_abs() const noexcept {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
};

/// N reals per cell center, stored component-major (all of component 0, then 1, ...).
struct VectorField {
  GridSpec grid;
  std::vector<double> values;

  VectorField() = default;
  explicit VectorField(const GridSpec& g, double fill = 0.0)
      : grid(g), values(g.cell_count() * g.dim(), fill) {}
  VectorField(const GridSpec& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.cell_count() * grid.dim())
      throw ShapeError("vector field: component count does not match grid");
  }

  template <class F>
  static VectorField sample(const GridSpec& g, F&& f) {
    VectorField m(g);
    const std::size_t n = g.cell_count();
    for (std::size_t k = 0; k < n; ++k) {
      const auto v = f(g.center(k));
      for (int c = 0; c < g.dim(); ++c) m.values[c * n + k] = v[c];
    }
    return m;
  }

  int components() const noexcept { return grid.dim(); }
  std::size_t cells() const noexcept { return grid.cell_count(); }

  std::span<double> component(int c) noexcept {
    return {values.data() + c * cells(), cells()};
  }
  std::span<const double> component(int c) const noexcept {
    return {values.data() + c * cells(), cells()};
  }

  double& at(int c, std::size_t k) noexcept { return values[c * cells() + k]; }
  double at(int c, std::size_t k) const noexcept { return values[c * cells() + k]; }

  double norm_sq_at(std::size_t k) const noexcept {
    double s = 0.0;
    for (int c = 0; c < components(); ++c) s += at(c, k) * at(c, k);
    return s;
  }

  ScalarField component_field(int c) const {
    auto s = component(c);
    return ScalarField(grid, std::vector<double>(s.begin(), s.end()));
  }

  ScalarField magnitude() const {
    ScalarField s(grid);
    for (std::size_t k = 0; k < cells(); ++k) s.values[k] = std::sqrt(norm_sq_at(k));
    return s;
  }

  double max_abs() const noexcept {
    double m = 0.0;
    for (std::size_t k = 0; k < cells(); ++k) m = std::max(m, norm_sq_at(k));
    return std::sqrt(m);
  }
};

/// Values on the faces normal to each axis (staggered layout).
///
/// Faces normal to axis a form a grid with cells[a] + 1 entries along a; face
/// index 0 and cells[a] lie on the walls.
struct FaceField {
  GridSpec grid;
  std::array<std::vector<double>, 3> values;

  FaceField() = default;
  explicit FaceField(const GridSpec& g) : grid(g) {
    for (int a = 0; a < g.dim(); ++a) values[a].assign(face_count(g, a), 0.0);
  }

  static std::size_t face_count(const GridSpec& g, int a) noexcept {
    return g.cell_count() / g.cells(a) * (g.cells(a) + 1);
  }
};

namespace detail {

inline void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw DataError(std::string(what) + ": non-finite value");
}

}  // namespace detail

inline void require_finite(const ScalarField& f, const char* what) { detail::check_finite(f.values, what); }
inline void require_finite(const VectorField& f, const char* what) { detail::check_finite(f.values, what); }

}  // namespace hcns
