#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hcns/averaging.hpp"
#include "hcns/operators.hpp"
#include "oracles.hpp"

using namespace hcns;

TEST(GridSpec, UnitBallVolumes) {
  EXPECT_DOUBLE_EQ(GridSpec::uniform(1, 8).unit_ball_volume(), 2.0);
  EXPECT_DOUBLE_EQ(GridSpec::uniform(2, 8).unit_ball_volume(), std::numbers::pi);
  EXPECT_DOUBLE_EQ(GridSpec::uniform(3, 8).unit_ball_volume(), 4.0 * std::numbers::pi / 3.0);
}

TEST(GridSpec, RejectsInvalid) {
  EXPECT_THROW(GridSpec::uniform(4, 8), ConfigError);
  EXPECT_THROW(GridSpec::uniform(2, 3), ConfigError);
  EXPECT_THROW(GridSpec(2, {8, 8, 1}, {1.0, -1.0, 1.0}), ConfigError);
}

TEST(GridSpec, FlatIndexRoundTrip) {
  GridSpec g(3, {4, 5, 6}, {1.0, 2.0, 3.0});
  for (std::size_t k = 0; k < g.cell_count(); ++k) EXPECT_EQ(g.flat(g.unflat(k)), k);
  EXPECT_EQ(g.stride(2), 1u);  // last axis fastest
}

TEST(Operators, GradientOfConstantIsZero) {
  auto g = GridSpec::uniform(2, 8);
  ScalarField f(g, 5.0);
  // Dirichlet walls see the jump from 5 to 0, so only interior cells are zero.
  auto grad = gradient(f);
  for (std::size_t k = 0; k < g.cell_count(); ++k) {
    auto i = g.unflat(k);
    if (i[0] == 0 || i[0] == 7 || i[1] == 0 || i[1] == 7) continue;
    EXPECT_EQ(grad.at(0, k), 0.0);
    EXPECT_EQ(grad.at(1, k), 0.0);
  }
}

TEST(Operators, GradientExactOnAffineInterior) {
  auto g = GridSpec(2, {10, 12, 1}, {1.0, 1.5, 1.0});
  auto f = ScalarField::sample(g, [](const Point& x) { return 2.0 * x[0] - 3.0 * x[1] + 0.5; });
  auto grad = gradient(f);
  for (std::size_t k = 0; k < g.cell_count(); ++k) {
    auto i = g.unflat(k);
    if (i[0] == 0 || i[0] == 9 || i[1] == 0 || i[1] == 11) continue;
    EXPECT_NEAR(grad.at(0, k), 2.0, 1e-12);
    EXPECT_NEAR(grad.at(1, k), -3.0, 1e-12);
  }
  auto fg = face_gradient(f);
  EXPECT_NEAR(fg.values[0][5], 2.0, 1e-12);
}

TEST(Operators, LaplacianMatchesDenseStencil) {
  std::mt19937_64 rng(11);
  for (int dim : {1, 2, 3}) {
    GridSpec g(dim, {8, 7, 6}, {1.0, 0.8, 1.3});
    auto u = oracle::random_scalar(g, rng);
    auto lap = laplacian(u);
    auto ref = oracle::laplacian_matrix(g).mul(u.values);
    EXPECT_LT(oracle::max_abs_diff(lap.values, ref), 1e-12 * 64 * 4) << "dim " << dim;
  }
}

TEST(Operators, StaggeredPairAdjointAndComposesToLaplacian) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 1 + trial % 3;
    GridSpec g(dim, {5 + trial % 4, 6, 4}, {1.0, 1.2, 0.7});
    auto u = oracle::random_scalar(g, rng);
    FaceField F(g);
    std::uniform_real_distribution<double> d(-1, 1);
    for (int a = 0; a < dim; ++a)
      for (auto& v : F.values[a]) v = d(rng);
    const double lhs = inner(face_gradient(u), F);
    const double rhs = -inner(u, face_divergence(F));
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));

    auto lap = laplacian(u);
    auto dg = face_divergence(face_gradient(u));
    EXPECT_LT(oracle::max_abs_diff(lap.values, dg.values), 1e-13);
  }
}

TEST(Operators, CollocatedPairAdjoint) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 1 + trial % 3;
    GridSpec g(dim, {6, 5 + trial % 3, 4}, {1.0, 2.0, 0.5});
    auto u = oracle::random_scalar(g, rng);
    auto V = oracle::random_vector(g, rng);
    const double lhs = inner(gradient(u), V);
    const double rhs = -inner(u, divergence(V));
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(Operators, CollocatedGradientMatchesDense) {
  std::mt19937_64 rng(14);
  GridSpec g(2, {6, 7, 1}, {1.0, 1.0, 1.0});
  auto u = oracle::random_scalar(g, rng);
  auto grad = gradient(u);
  for (int b = 0; b < 2; ++b) {
    auto ref = oracle::central_diff(g, b).mul(u.values);
    auto comp = grad.component(b);
    EXPECT_LT(oracle::max_abs_diff(std::vector<double>(comp.begin(), comp.end()), ref), 1e-12);
  }
}

TEST(Operators, ErrorPaths) {
  auto g = GridSpec::uniform(2, 6);
  ScalarField f(g);
  f.values[3] = std::nan("");
  EXPECT_THROW(gradient(f), DataError);
  EXPECT_THROW(inner(ScalarField(g), ScalarField(GridSpec::uniform(2, 8))), ShapeError);
  EXPECT_THROW(ScalarField(g, std::vector<double>(5)), ShapeError);
}

TEST(BallAverage, ConstantAndOddSymmetry) {
  auto g = GridSpec::uniform(2, 32);
  ScalarField c(g, 3.0);
  EXPECT_NEAR(ball_average(c, {0.5, 0.5, 0}, 0.2), 3.0, 1e-14);
  const Point y{0.41, 0.53, 0.0};
  auto f = ScalarField::sample(g, [&](const Point& x) { return x[0] - y[0]; });
  EXPECT_LT(std::abs(ball_average(f, y, 0.2)), 2.0 * g.spacing(0));
}

TEST(BallAverage, MatchesMaskedSum) {
  std::mt19937_64 rng(15);
  auto g = GridSpec::uniform(2, 8);
  auto f = oracle::random_scalar(g, rng);
  const double h = g.spacing(0);
  const Point y{0.5, 0.5, 0};
  double s = 0.0;
  int cnt = 0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const double dx = (i + 0.5) * h - y[0], dy = (j + 0.5) * h - y[1];
      if (dx * dx + dy * dy < 9 * h * h) {
        s += f.values[i * 8 + j];
        ++cnt;
      }
    }
  EXPECT_NEAR(ball_average(f, y, 3 * h), s / cnt, 1e-12);
}

TEST(BallAverage, Errors) {
  auto g = GridSpec::uniform(2, 8);
  ScalarField f(g, 1.0);
  EXPECT_THROW(ball_average(f, {0.5, 0.5, 0}, 0.01), DegenerateProbeError);
  EXPECT_THROW(ball_average(f, {0.1, 0.5, 0}, 0.3), DegenerateProbeError);
}

TEST(BallAverage, AffineInvariance) {
  std::mt19937_64 rng(16);
  auto g = GridSpec::uniform(2, 16);
  auto f = oracle::random_scalar(g, rng);
  ScalarField af(g);
  for (std::size_t k = 0; k < f.size(); ++k) af[k] = 2.5 * f[k] - 0.75;
  const Point y{0.5, 0.45, 0};
  EXPECT_NEAR(ball_average(af, y, 0.3), 2.5 * ball_average(f, y, 0.3) - 0.75, 1e-13);
}

namespace {

SpaceTimeSeries series_from(const GridSpec& g, int n, double T, auto&& mfun) {
  SpaceTimeSeries s(g, T);
  for (int k = 0; k < n; ++k) {
    const double t = T * k / (n - 1);
    s.push_back({t, ScalarField(g), VectorField::sample(g, [&](const Point& x) { return mfun(x, t); })});
  }
  return s;
}

}  // namespace

TEST(CylinderAverage, ConstantVector) {
  auto g = GridSpec::uniform(2, 16);
  auto s = series_from(g, 41, 1.0, [](const Point&, double) { return std::array<double, 3>{0.3, -1.2, 0}; });
  auto avg = cylinder_average(s, {{0.5, 0.5, 0}, 0.5, 0.4}, FieldSelector::Conductance);
  EXPECT_NEAR(avg[0], 0.3, 1e-14);
  EXPECT_NEAR(avg[1], -1.2, 1e-14);
}

TEST(CylinderAverage, LinearInTimeIsCenterValue) {
  auto g = GridSpec::uniform(2, 16);
  auto s = series_from(g, 41, 1.0, [](const Point&, double t) { return std::array<double, 3>{t, 0, 0}; });
  // Window (0.42, 0.58) holds snapshots symmetric about tau.
  auto avg = cylinder_average(s, {{0.5, 0.5, 0}, 0.5, 0.4}, FieldSelector::Conductance);
  EXPECT_NEAR(avg[0], 0.5, 1e-12);
}

TEST(CylinderAverage, MatchesBruteForceDoubleSum) {
  std::mt19937_64 rng(17);
  auto g = GridSpec::uniform(2, 8);
  auto s = oracle::random_series(g, 40, 1.0, rng);
  const ParabolicCylinder q{{0.5, 0.5, 0}, 0.5, 0.375};
  auto avg = cylinder_average(s, q, FieldSelector::Pressure);
  // Brute force: trapezoid over in-window times, mean over ball cells.
  std::vector<double> ts, vals;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k].t < q.t_begin() || s[k].t > q.t_end()) continue;
    double sum = 0;
    int cnt = 0;
    for (std::size_t c = 0; c < g.cell_count(); ++c)
      if (distance(g.center(c), q.y, 2) < q.r) {
        sum += s[k].p[c];
        ++cnt;
      }
    ts.push_back(s[k].t);
    vals.push_back(sum / cnt);
  }
  ASSERT_GE(ts.size(), 2u);
  double num = 0.0;
  for (std::size_t k = 1; k < ts.size(); ++k) num += 0.5 * (ts[k] - ts[k - 1]) * (vals[k] + vals[k - 1]);
  EXPECT_NEAR(avg[0], num / (ts.back() - ts.front()), 1e-12);
}

TEST(CylinderAverage, InsufficientResolution) {
  auto g = GridSpec::uniform(2, 16);
  auto s = series_from(g, 3, 1.0, [](const Point&, double) { return std::array<double, 3>{1, 1, 0}; });
  try {
    cylinder_average(s, {{0.5, 0.5, 0}, 0.4, 0.2}, FieldSelector::Conductance);
    FAIL() << "expected InsufficientResolutionError";
  } catch (const InsufficientResolutionError& e) {
    EXPECT_NEAR(e.required_cadence(), 0.01, 1e-15);
  }
}

TEST(LqIntegral, BasicValues) {
  auto g = GridSpec::uniform(2, 10);
  ScalarField one(g, 1.0);
  EXPECT_NEAR(lq_integral(one, {}, 2.0), 1.0, 1e-13);
  EXPECT_NEAR(lq_integral(one, {}, 2.0, true), 1.0, 1e-13);
  EXPECT_EQ(lq_integral(ScalarField(g), {}, 3.0), 0.0);
  EXPECT_THROW(lq_integral(one, {}, 0.5), ConfigError);
}

TEST(LqIntegral, MatchesDirectSum) {
  std::mt19937_64 rng(18);
  auto g = GridSpec::uniform(2, 8);
  auto f = oracle::random_scalar(g, rng);
  double s = 0;
  for (double v : f.values) s += std::abs(v) * std::abs(v) * std::abs(v);
  s /= 64.0;
  EXPECT_NEAR(lq_integral(f, {}, 3.0), s, 1e-12);
  double mx = 0;
  for (double v : f.values) mx = std::max(mx, std::abs(v));
  EXPECT_EQ(lq_integral(f, {}, INFINITY), mx);
}
