#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>

#include "hcns/error.hpp"

namespace hcns {

/// Physical point; coordinates beyond the grid dimension are ignored (kept 0).
using Point = std::array<double, 3>;
using Index = std::array<int, 3>;

/// Uniform cell-centered Cartesian grid on the box [0, extent_0] x ... x [0, extent_{N-1}].
///
/// Axes past `dim` are padded with a single cell so loops can always run over
/// three axes. Flat storage is row-major: the last active axis varies fastest.
class GridSpec {
 public:
  GridSpec() = default;

  GridSpec(int dim, Index cells, Point extent) : dim_(dim), cells_(cells), extent_(extent) {
    if (dim < 1 || dim > 3) throw ConfigError("grid dimension must be 1, 2 or 3, got " + std::to_string(dim));
    for (int a = 0; a < 3; ++a) {
      if (a < dim) {
        if (cells[a] < 4) throw ConfigError("grid needs at least 4 cells per axis");
        if (!(extent[a] > 0.0) || !std::isfinite(extent[a])) throw ConfigError("grid extents must be positive");
      } else {
        cells_[a] = 1;
        extent_[a] = 1.0;
      }
    }
    for (int a = 0; a < 3; ++a) spacing_[a] = extent_[a] / cells_[a];
    stride_[2] = 1;
    stride_[1] = cells_[2];
    stride_[0] = cells_[1] * cells_[2];
  }

  /// Square/cubic grid with `n` cells per axis over [0, length]^dim.
  static GridSpec uniform(int dim, int n, double length = 1.0) {
    return GridSpec(dim, {n, n, n}, {length, length, length});
  }

  int dim() const noexcept { return dim_; }
  int cells(int axis) const noexcept { return cells_[axis]; }
  const Index& cells() const noexcept { return cells_; }
  double extent(int axis) const noexcept { return extent_[axis]; }
  const Point& extent() const noexcept { return extent_; }
  double spacing(int axis) const noexcept { return spacing_[axis]; }
  std::size_t stride(int axis) const noexcept { return stride_[axis]; }

  std::size_t cell_count() const noexcept {
    return static_cast<std::size_t>(cells_[0]) * cells_[1] * cells_[2];
  }

  /// h_1 * ... * h_N.
  double cell_volume() const noexcept {
    double v = 1.0;
    for (int a = 0; a < dim_; ++a) v *= spacing_[a];
    return v;
  }

  double domain_volume() const noexcept {
    double v = 1.0;
    for (int a = 0; a < dim_; ++a) v *= extent_[a];
    return v;
  }

  /// omega_N, the volume of the unit ball in R^N.
  double unit_ball_volume() const noexcept { return unit_ball_volume(dim_); }

  static double unit_ball_volume(int dim) noexcept {
    switch (dim) {
      case 1: return 2.0;
      case 2: return std::numbers::pi;
      default: return 4.0 * std::numbers::pi / 3.0;
    }
  }

  std::size_t flat(const Index& i) const noexcept {
    return i[0] * stride_[0] + i[1] * stride_[1] + i[2] * stride_[2];
  }

  Index unflat(std::size_t k) const noexcept {
    Index i{};
    i[0] = static_cast<int>(k / stride_[0]);
    k %= stride_[0];
    i[1] = static_cast<int>(k / stride_[1]);
    i[2] = static_cast<int>(k % stride_[1]);
    return i;
  }

  Point center(const Index& i) const noexcept {
    Point x{};
    for (int a = 0; a < dim_; ++a) x[a] = (i[a] + 0.5) * spacing_[a];
    return x;
  }

  Point center(std::size_t k) const noexcept { return center(unflat(k)); }

  /// Same shape; extents compared to 1e-12 relative (they round-trip through spacings on disk).
  bool operator==(const GridSpec& o) const noexcept {
    if (dim_ != o.dim_ || cells_ != o.cells_) return false;
    for (int a = 0; a < 3; ++a)
      if (std::abs(extent_[a] - o.extent_[a]) > 1e-12 * std::max(extent_[a], o.extent_[a])) return false;
    return true;
  }

 private:
  int dim_ = 1;
  Index cells_{4, 1, 1};
  Point extent_{1.0, 1.0, 1.0};
  Point spacing_{0.25, 1.0, 1.0};
  std::array<std::size_t, 3> stride_{1, 1, 1};
};

/// A space-time point z = (y, tau).
struct SpaceTimeProbe {
  Point y{};
  double tau = 0.0;
};

inline double distance(const Point& a, const Point& b, int dim) noexcept {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

inline void require_same_grid(const GridSpec& a, const GridSpec& b, const char* what) {
  if (!(a == b)) throw ShapeError(std::string(what) + ": grids do not match");
}

}  // namespace hcns
