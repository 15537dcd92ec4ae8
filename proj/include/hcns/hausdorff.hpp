#pragma once

// Parabolic box counting on space-time point sets: boxes of spatial side r and
// temporal side r^2, premeasures N(r) r^s and a log-log dimension fit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hcns/grid.hpp"

namespace hcns {

/// Number of occupied boxes floor(y_a / r), floor(tau / r^2).
inline std::size_t parabolic_cover_count(const std::vector<SpaceTimeProbe>& pts, int dim, double r) {
  if (!(r > 0.0)) throw ConfigError("cover radius must be positive");
  if (dim < 1 || dim > 3) throw ConfigError("point dimension must be 1, 2 or 3");
  std::set<std::array<long long, 4>> boxes;
  const double r2 = r * r;
  for (const auto& p : pts) {
    std::array<long long, 4> key{0, 0, 0, 0};
    for (int a = 0; a < dim; ++a) key[a] = static_cast<long long>(std::floor(p.y[a] / r));
    key[3] = static_cast<long long>(std::floor(p.tau / r2));
    boxes.insert(key);
  }
  return boxes.size();
}

inline double premeasure_sum(const std::vector<SpaceTimeProbe>& pts, int dim, double r, double s) {
  return static_cast<double>(parabolic_cover_count(pts, dim, r)) * std::pow(r, s);
}

/// Greedy cover by cylinders |x - y| <= r, |t - tau| <= r^2/2 centred at uncovered points (visit order).
inline std::size_t greedy_cylinder_cover(const std::vector<SpaceTimeProbe>& pts, int dim, double r) {
  std::vector<char> covered(pts.size(), 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (covered[i]) continue;
    ++count;
    for (std::size_t j = i; j < pts.size(); ++j)
      if (!covered[j] && distance(pts[i].y, pts[j].y, dim) <= r && std::abs(pts[i].tau - pts[j].tau) <= 0.5 * r * r)
        covered[j] = 1;
  }
  return count;
}

struct CoverReport {
  double r = 0.0;
  std::size_t count = 0;
  std::vector<double> s_grid;
  std::vector<double> premeasure;  // count * r^s per s in s_grid
};

/// Cover reports for every radius; radii are processed in parallel when workers > 1.
inline std::vector<CoverReport> cover_profile(const std::vector<SpaceTimeProbe>& pts, int dim,
                                              const std::vector<double>& radii, const std::vector<double>& s_grid,
                                              int workers = 1) {
  std::vector<CoverReport> out(radii.size());
  auto run = [&](std::size_t k) {
    CoverReport c;
    c.r = radii[k];
    c.count = parabolic_cover_count(pts, dim, radii[k]);
    c.s_grid = s_grid;
    for (double s : s_grid) c.premeasure.push_back(static_cast<double>(c.count) * std::pow(c.r, s));
    out[k] = std::move(c);
  };
  const std::size_t nw = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, std::max<std::size_t>(radii.size(), 1));
  if (nw == 1) {
    for (std::size_t k = 0; k < radii.size(); ++k) run(k);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < nw; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < radii.size(); k += nw) run(k);
      });
    for (auto& t : pool) t.join();
  }
  return out;
}

/// 5 dyadic rungs starting at width / 8.
inline std::vector<double> default_cover_radii(double width) {
  std::vector<double> r;
  for (int k = 0; k < 5; ++k) r.push_back(width / 8.0 / (1 << k));
  return r;
}

struct DimensionEstimate {
  int dim = 0;
  std::vector<double> radii;
  std::vector<std::size_t> counts;
  double dim_est = 0.0;
  double raw_slope = 0.0;  // before clamping to [0, N + 2]
  double intercept = 0.0;
  double residual = 0.0;  // rms of log N residuals
  double ci_low = 0.0, ci_high = 0.0;
  int bootstrap_samples = 0;
  double resolution_floor = std::numeric_limits<double>::quiet_NaN();  // 2 x lattice pitch, when known
  bool below_floor = false;  // some radius is finer than the data can resolve
};

namespace detail {

inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y, double* intercept = nullptr) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  if (intercept) *intercept = (sy - slope * sx) / n;
  return slope;
}

}  // namespace detail

/// Least-squares slope of log N(r) against log(1/r), with a percentile bootstrap over radius subsets.
inline DimensionEstimate dimension_estimate(const std::vector<SpaceTimeProbe>& pts, int dim,
                                            const std::vector<double>& radii, double lattice_pitch = 0.0,
                                            int bootstrap = 400, std::uint64_t seed = 20240601, int workers = 1) {
  if (pts.empty()) throw DataError("dimension estimate of an empty point set");
  if (radii.size() < 4) throw ConfigError("dimension estimate needs at least 4 radii");
  for (double r : radii)
    if (!(r > 0.0)) throw ConfigError("radii must be positive");
  const auto [rmin, rmax] = std::minmax_element(radii.begin(), radii.end());
  if (*rmax / *rmin < 10.0 * (1.0 - 1e-12)) throw ConfigError("radii must span at least one decade");

  DimensionEstimate est;
  est.dim = dim;
  est.radii = radii;
  const auto prof = cover_profile(pts, dim, radii, {}, workers);
  std::vector<double> lx, ly;
  for (const auto& c : prof) {
    est.counts.push_back(c.count);
    lx.push_back(std::log(1.0 / c.r));
    ly.push_back(std::log(static_cast<double>(c.count)));
  }
  est.raw_slope = detail::ls_slope(lx, ly, &est.intercept);
  double r2 = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    const double e = ly[k] - est.intercept - est.raw_slope * lx[k];
    r2 += e * e;
  }
  est.residual = std::sqrt(r2 / static_cast<double>(lx.size()));
  const double hi = dim + 2.0;
  est.dim_est = std::clamp(est.raw_slope, 0.0, hi);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, lx.size() - 1);
  std::vector<double> slopes;
  for (int b = 0; b < bootstrap; ++b) {
    std::vector<double> bx, by;
    for (std::size_t k = 0; k < lx.size(); ++k) {
      const auto j = pick(rng);
      bx.push_back(lx[j]);
      by.push_back(ly[j]);
    }
    if (std::all_of(bx.begin(), bx.end(), [&](double v) { return v == bx[0]; })) continue;
    slopes.push_back(std::clamp(detail::ls_slope(bx, by), 0.0, hi));
  }
  est.bootstrap_samples = static_cast<int>(slopes.size());
  if (slopes.empty()) {
    est.ci_low = est.ci_high = est.dim_est;
  } else {
    std::sort(slopes.begin(), slopes.end());
    auto q = [&](double f) { return slopes[static_cast<std::size_t>(f * static_cast<double>(slopes.size() - 1))]; };
    est.ci_low = q(0.025);
    est.ci_high = q(0.975);
  }
  if (lattice_pitch > 0.0) {
    est.resolution_floor = 2.0 * lattice_pitch;
    est.below_floor = *rmin < est.resolution_floor;
  }
  return est;
}

inline void write_cover_csv(const std::filesystem::path& path, const std::vector<CoverReport>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << std::setprecision(17) << "r,count";
  if (!rows.empty())
    for (double s : rows.front().s_grid) out << ",premeasure_s" << s;
  out << '\n';
  for (const auto& c : rows) {
    out << c.r << ',' << c.count;
    for (double v : c.premeasure) out << ',' << v;
    out << '\n';
  }
}

inline nlohmann::ordered_json to_json(const DimensionEstimate& e) {
  nlohmann::ordered_json j;
  j["dim"] = e.dim;
  j["radii"] = e.radii;
  j["counts"] = e.counts;
  j["dim_est"] = e.dim_est;
  j["raw_slope"] = e.raw_slope;
  j["intercept"] = e.intercept;
  j["residual"] = e.residual;
  j["ci"] = {e.ci_low, e.ci_high};
  j["bootstrap_samples"] = e.bootstrap_samples;
  if (std::isnan(e.resolution_floor)) j["resolution_floor"] = nullptr;
  else j["resolution_floor"] = e.resolution_floor;
  j["below_floor"] = e.below_floor;
  return j;
}

inline void write_dimension_json(const std::filesystem::path& path, const DimensionEstimate& e) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << to_json(e).dump(2) << '\n';
}

}  // namespace hcns
