#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hcns/conductance.hpp"
#include "oracles.hpp"

using namespace hcns;
using std::numbers::pi;

namespace {

StepParams params_with(double D, double E, double gamma, double dt, double eps = 1e-12) {
  StepParams p;
  p.D = D;
  p.E = E;
  p.gamma = gamma;
  p.dt = dt;
  p.eps_m = eps;
  return p;
}

double l2(const VectorField& m) { return std::sqrt(inner(m, m)); }

}  // namespace

TEST(MetabolicFactor, LinearExponent) {
  auto prm = params_with(1, 1, 1.0, 0.01);
  for (double mag : {0.0, 0.3, 5.0, 1e6}) EXPECT_DOUBLE_EQ(metabolic_factor(mag, prm), 1.0 / 1.01);
}

TEST(MetabolicFactor, VanishesAtOriginForSuperlinear) {
  EXPECT_EQ(metabolic_factor(0.0, params_with(1, 1, 2.0, 0.1, 0.0)), 1.0);
}

TEST(MetabolicFactor, MatchesScalarBackwardEulerOracle) {
  // m' = -|m|^{2 gamma - 2} m, backward Euler with the rate frozen at max(|m|, eps).
  const double gamma = 0.75, eps = 1e-8, dt = 1e-3;
  const double rate = std::pow(eps, 2 * gamma - 2);
  const double m0 = 1.0;
  // Bisection on the implicit update m1 + dt * rate * m1 = m0.
  double lo = 0.0, hi = m0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mid + dt * rate * mid > m0 ? hi : lo) = mid;
  }
  const double m1 = 0.5 * (lo + hi);
  EXPECT_NEAR(m1, 1.0 / 11.0, 1e-15);
  EXPECT_NEAR(metabolic_factor(0.0, params_with(1, 1, gamma, dt, eps)), m1 / m0, 1e-15);
  EXPECT_NEAR(metabolic_factor(0.0, params_with(1, 1, gamma, dt, eps)), 0.0909090909090909, 1e-15);
}

TEST(MetabolicFactor, RangeAndMonotonicity) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> gam(0.51, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto prm = params_with(1, 1, gam(rng), 1e-2, 1e-10);
    double prev = metabolic_factor(0.0, prm);
    for (int k = 0; k < 50; ++k) {
      const double mag = std::pow(10.0, -12 + 18.0 * k / 49.0);
      const double f = metabolic_factor(mag, prm);
      EXPECT_GT(f, 0.0);
      EXPECT_LE(f, 1.0);
      if (prm.gamma >= 1.0) EXPECT_LE(f, prev + 1e-15);
      else EXPECT_GE(f, prev - 1e-15);
      prev = f;
    }
  }
}

TEST(StepParams, Validation) {
  EXPECT_THROW(params_with(1, 1, 0.5, 0.1).validate(), ConfigError);
  EXPECT_THROW(params_with(0, 1, 1.0, 0.1).validate(), ConfigError);
  EXPECT_THROW(params_with(1, 1, 1.0, 0.0).validate(), ConfigError);
  EXPECT_THROW(params_with(1, 1, 0.7, 0.1, 0.0).validate(), ConfigError);
  EXPECT_NO_THROW(params_with(1, 0, 1.0, 0.1).validate());
  try {
    params_with(1, 1, 0.4, 0.1).validate();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("1/2"), std::string::npos);
  }
}

TEST(AdvanceConductance, ZeroIsFixedPoint) {
  std::mt19937_64 rng(32);
  auto g = GridSpec::uniform(2, 10);
  auto p = oracle::random_scalar(g, rng);
  auto out = advance_conductance(VectorField(g), p, params_with(0.7, 2.0, 0.8, 0.01, 1e-6), 1e-12);
  EXPECT_EQ(out.m.max_abs(), 0.0);
}

TEST(AdvanceConductance, EigenmodeDecay) {
  const int n = 32;
  const double D = 0.6, dt = 1e-3;
  auto g = GridSpec::uniform(1, n);
  const double h = g.spacing(0);
  auto m = VectorField::sample(g, [](const Point& x) { return std::array<double, 3>{std::sin(pi * x[0]), 0, 0}; });
  const auto m0 = m;
  ScalarField p(g);
  auto prm = params_with(D, 1.0, 1.0, dt);
  const int steps = 25;
  for (int s = 0; s < steps; ++s) m = advance_conductance(m, p, prm, 1e-14).m;
  const double lam = 2.0 * (1.0 - std::cos(pi * h)) / (h * h);
  const double amp = std::pow((1.0 + dt * D * D * lam) * (1.0 + dt), -steps);
  for (std::size_t k = 0; k < g.cell_count(); ++k) EXPECT_NEAR(m.values[k], amp * m0.values[k], 1e-10);
}

TEST(AdvanceConductance, MatchesDenseReferenceStep) {
  std::mt19937_64 rng(33);
  auto g = GridSpec::uniform(2, 6);
  auto m = oracle::random_vector(g, rng);
  auto p = oracle::random_scalar(g, rng);
  auto f = oracle::random_vector(g, rng);
  auto prm = params_with(0.8, 1.3, 1.4, 0.02);
  auto got = advance_conductance(m, p, prm, 1e-15, &f).m;

  const int nc = static_cast<int>(g.cell_count());
  auto force = oracle::coupling_force(m, p.values);
  auto L = oracle::laplacian_matrix(g);
  oracle::Dense H(nc, nc);
  const double coeff = prm.dt * prm.D * prm.D;
  for (int i = 0; i < nc; ++i)
    for (int j = 0; j < nc; ++j) H(i, j) = (i == j ? 1.0 : 0.0) - coeff * L(i, j);
  std::vector<double> ref(m.values.size());
  for (int c = 0; c < 2; ++c) {
    std::vector<double> rhs(nc);
    for (int k = 0; k < nc; ++k) {
      const std::size_t idx = static_cast<std::size_t>(c) * nc + k;
      rhs[k] = m.values[idx] + prm.dt * prm.E * prm.E * force[idx] + prm.dt * f.values[idx];
    }
    auto x = oracle::solve(H, rhs);
    for (int k = 0; k < nc; ++k) ref[static_cast<std::size_t>(c) * nc + k] = x[k];
  }
  for (int k = 0; k < nc; ++k) {
    const double mag = std::hypot(ref[k], ref[nc + k]);
    const double fac = 1.0 / (1.0 + prm.dt * std::pow(mag, 2 * (prm.gamma - 1)));
    ref[k] *= fac;
    ref[nc + k] *= fac;
  }
  EXPECT_LT(oracle::max_abs_diff(got.values, ref), 1e-12);
}

TEST(AdvanceConductance, DecayWithoutCoupling) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 1 + trial % 3;
    GridSpec g(dim, {8, 6, 5}, {1.0, 1.0, 1.0});
    auto m = oracle::random_vector(g, rng, -4, 4);
    auto p = oracle::random_scalar(g, rng);
    auto prm = params_with(0.5, 0.0, 0.6 + 0.1 * trial, 0.05, 1e-9);
    for (int s = 0; s < 5; ++s) {
      auto next = advance_conductance(m, p, prm, 1e-13).m;
      EXPECT_LE(l2(next), l2(m) * (1 + 1e-12));
      m = next;
    }
  }
}

TEST(AdvanceConductance, CflWarningReported) {
  auto g = GridSpec::uniform(2, 8);
  auto p = ScalarField::sample(g, [](const Point& x) { return 50 * x[0] * (1 - x[0]); });
  VectorField m(g, 0.1);
  auto out = advance_conductance(m, p, params_with(1, 1, 1, 0.1), 1e-12);
  EXPECT_TRUE(out.cfl_warning);
  EXPECT_GT(out.cfl_number, 1.0);
  auto calm = advance_conductance(m, p, params_with(1, 1, 1, 1e-5), 1e-12);
  EXPECT_FALSE(calm.cfl_warning);
}

TEST(AdvanceConductance, ShapeAndDataErrors) {
  auto g = GridSpec::uniform(2, 8);
  VectorField m(g);
  EXPECT_THROW(advance_conductance(m, ScalarField(GridSpec::uniform(2, 9)), params_with(1, 1, 1, 0.1), 1e-10),
               ShapeError);
  m.values[3] = std::nan("");
  EXPECT_THROW(advance_conductance(m, ScalarField(g), params_with(1, 1, 1, 0.1), 1e-10), DataError);
}

TEST(AdvanceConductance, FirstOrderInTime) {
  // Coupled run (pressure re-solved each step) against a fine-dt reference.
  auto g = GridSpec::uniform(2, 12);
  auto S = ScalarField::sample(g, [](const Point& x) {
    return 20.0 * std::exp(-20.0 * ((x[0] - 0.4) * (x[0] - 0.4) + (x[1] - 0.55) * (x[1] - 0.55)));
  });
  auto m0 = VectorField::sample(g, [](const Point& x) {
    const double b = std::sin(pi * x[0]) * std::sin(pi * x[1]);
    return std::array<double, 3>{b, 0.5 * b, 0};
  });
  const double T = 0.1;
  auto run = [&](int steps) {
    auto prm = params_with(0.4, 1.0, 1.5, T / steps);
    VectorField m = m0;
    ScalarField p;
    for (int s = 0; s < steps; ++s) {
      p = solve_pressure(m, S, 1e-13, s ? &p : nullptr).p;
      m = advance_conductance(m, p, prm, 1e-13).m;
    }
    return m;
  };
  auto ref = run(640);
  auto err = [&](int steps) {
    auto m = run(steps);
    for (std::size_t k = 0; k < m.values.size(); ++k) m.values[k] -= ref.values[k];
    return l2(m);
  };
  const double e1 = err(10), e2 = err(20);
  EXPECT_GE(e1 / e2, 1.7);
  EXPECT_LE(e1 / e2, 2.3);
}
