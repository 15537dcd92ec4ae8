#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hcns/field.hpp"

namespace hcns {

/// One stored time level of the coupled solution.
struct Snapshot {
  double t = 0.0;
  ScalarField p;
  VectorField m;
};

/// Ordered record of (t, p, m) snapshots on one grid over [0, horizon].
class SpaceTimeSeries {
 public:
  SpaceTimeSeries() = default;
  SpaceTimeSeries(GridSpec grid, double horizon, double cadence = 0.0)
      : grid_(grid), horizon_(horizon), cadence_(cadence) {
    if (!(horizon > 0.0)) throw ConfigError("series horizon must be positive");
  }

  const GridSpec& grid() const noexcept { return grid_; }
  double horizon() const noexcept { return horizon_; }
  const std::vector<Snapshot>& snapshots() const noexcept { return snapshots_; }
  std::size_t size() const noexcept { return snapshots_.size(); }
  bool empty() const noexcept { return snapshots_.empty(); }
  const Snapshot& operator[](std::size_t k) const noexcept { return snapshots_[k]; }

  /// Declared maximum gap; never smaller than the actual maximum gap.
  double cadence() const noexcept { return std::max(cadence_, max_gap()); }
  void set_cadence(double c) noexcept { cadence_ = c; }

  double max_gap() const noexcept {
    double g = 0.0;
    for (std::size_t k = 1; k < snapshots_.size(); ++k) g = std::max(g, snapshots_[k].t - snapshots_[k - 1].t);
    return g;
  }

  void push_back(Snapshot s) {
    require_same_grid(s.p.grid, grid_, "series snapshot p");
    require_same_grid(s.m.grid, grid_, "series snapshot m");
    const double tol = 1e-12 * std::max(1.0, horizon_);
    if (s.t < -tol || s.t > horizon_ + tol) throw DataError("snapshot time outside [0, T]");
    if (!snapshots_.empty() && !(s.t > snapshots_.back().t)) throw DataError("snapshot times must increase strictly");
    s.p.time = s.t;
    snapshots_.push_back(std::move(s));
  }

  /// Indices of snapshots with t in the closed window [t0, t1].
  std::vector<std::size_t> window(double t0, double t1) const {
    const double tol = 1e-12 * std::max(1.0, horizon_);
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < snapshots_.size(); ++k)
      if (snapshots_[k].t >= t0 - tol && snapshots_[k].t <= t1 + tol) idx.push_back(k);
    return idx;
  }

  /// Index of the snapshot whose time is closest to t.
  std::size_t nearest(double t) const {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < snapshots_.size(); ++k) {
      const double d = std::abs(snapshots_[k].t - t);
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    return best;
  }

 private:
  GridSpec grid_;
  double horizon_ = 1.0;
  double cadence_ = 0.0;
  std::vector<Snapshot> snapshots_;
};

/// Trapezoidal weights for the given (increasing) sample times; they sum to t_last - t_first.
inline std::vector<double> trapezoid_weights(const std::vector<double>& t) {
  std::vector<double> w(t.size(), 0.0);
  for (std::size_t k = 1; k < t.size(); ++k) {
    const double half = 0.5 * (t[k] - t[k - 1]);
    w[k - 1] += half;
    w[k] += half;
  }
  return w;
}

}  // namespace hcns
