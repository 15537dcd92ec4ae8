#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "hcns/energy.hpp"
#include "hcns/simulation.hpp"
#include "oracles.hpp"

using namespace hcns;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("hcns_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SimConfig small_smooth() {
  auto c = SimConfig::preset("smooth");
  c.cells = {12, 12, 12};
  c.T = 0.1;
  c.cadence = 0.025;
  c.tol = 1e-12;
  return c;
}

}  // namespace

TEST(SimConfig, TextRoundTrip) {
  auto c = SimConfig::preset("leaf");
  c.set_assignment("beta=0.3");
  c.set("source_center", "0.25, 0.75");
  const auto back = SimConfig::parse_text(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(SimConfig::from_json(c.to_json()).to_text(), c.to_text());
  EXPECT_DOUBLE_EQ(back.beta_value(), 0.3);
  EXPECT_DOUBLE_EQ(back.source_center[1], 0.75);
}

TEST(SimConfig, CommentsAndLineNumbers) {
  const auto c = SimConfig::parse_text("# run\n n = 1\ncells = 20  # fine\nD=0.3\n");
  EXPECT_EQ(c.n, 1);
  EXPECT_EQ(c.cells[0], 20);
  EXPECT_DOUBLE_EQ(c.params.D, 0.3);
  try {
    SimConfig::parse_text("n = 2\nbogus = 1\n");
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(SimConfig::parse_text("n 2\n"), ConfigError);
  EXPECT_THROW(SimConfig::parse_text("dt = fast\n"), ConfigError);
}

TEST(SimConfig, ValidationMessages) {
  auto c = SimConfig::preset("smooth");
  c.params.gamma = 0.4;
  try {
    c.validate();
    FAIL() << "gamma = 0.4 accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("gamma > 1/2"), std::string::npos) << e.what();
  }
  c = SimConfig::preset("smooth");
  c.q = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SimConfig::preset("smooth");
  c.q = 2.0;  // beta cap = 1
  c.beta = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.q = 4.0;
  c.beta = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.beta = std::numeric_limits<double>::quiet_NaN();
  EXPECT_DOUBLE_EQ(c.beta_value(), 0.5);
  c.q = 1.5;  // cap = 2 - 2/1.5
  EXPECT_NEAR(c.beta_value(), 1.0 / 3.0, 1e-15);
  c = SimConfig::preset("smooth");
  c.T = 0.5 + 0.001;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SimConfig::preset("smooth");
  c.source = "volcano";
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(SimConfig::preset("nope"), ConfigError);
}

TEST(SimConfig, ShippedConfigsMatchPresets) {
  for (const std::string name : {"leaf", "smooth", "zero"}) {
    const auto c = SimConfig::load(fs::path(HCNS_SOURCE_DIR) / "configs" / (name + ".cfg"));
    auto p = SimConfig::preset(name);
    p.outdir = c.outdir;
    EXPECT_EQ(c.to_text(), p.to_text()) << name;
    EXPECT_NO_THROW(c.validate());
  }
}

TEST(Sources, PointSourceHasRequestedMass) {
  auto c = SimConfig::preset("smooth");
  c.cells = {64, 64, 64};
  c.source = "point";
  c.source_amp = 3.0;
  const auto S = make_source(c);
  double mass = 0.0;
  for (double v : S.values) mass += v;
  EXPECT_NEAR(mass * S.grid.cell_volume(), 3.0, 1e-6);
}

TEST(Sources, FileSourceTextAndSnapshot) {
  const auto dir = scratch_dir("source");
  auto c = SimConfig::preset("smooth");
  c.cells = {6, 6, 6};
  std::mt19937_64 rng(51);
  const auto S = oracle::random_scalar(c.grid(), rng);
  {
    std::ofstream out(dir / "s.txt");
    out << std::setprecision(17);
    for (double v : S.values) out << v << '\n';
  }
  c.source = "file:" + (dir / "s.txt").string();
  EXPECT_EQ(make_source(c).values, S.values);
  write_snapshot(dir / "s.hcns", c.grid(), {0.0, S, VectorField(c.grid())});
  c.source = "file:" + (dir / "s.hcns").string();
  EXPECT_EQ(make_source(c).values, S.values);
  {
    std::ofstream out(dir / "short.txt");
    out << "1 2 3\n";
  }
  c.source = "file:" + (dir / "short.txt").string();
  EXPECT_THROW(make_source(c), ConfigError);
}

TEST(InitialConductance, PresetsBoundedAndVanishAtWalls) {
  for (const std::string m0 : {"bump", "modes"}) {
    auto c = SimConfig::preset("smooth");
    c.cells = {32, 32, 32};
    c.m0 = m0;
    c.m0_amp = 2.0;
    const auto m = make_initial_conductance(c);
    EXPECT_NEAR(m.max_abs(), m0 == "bump" ? 2.0 * std::pow(std::sin(15.5 * std::numbers::pi / 32), 2)
                                          : 2.0,
                1e-12);
  }
  auto c = SimConfig::preset("smooth");
  c.cells = {32, 32, 32};
  const auto m = make_initial_conductance(c);
  const double edge = std::sin(0.5 * std::numbers::pi / 32);
  for (int j = 0; j < 32; ++j) EXPECT_LE(std::abs(m.at(0, m.grid.flat({0, j, 0}))), edge);
}

TEST(SnapshotIo, RoundTripIsBitExact) {
  const auto dir = scratch_dir("io");
  std::mt19937_64 rng(52);
  for (int dim = 1; dim <= 3; ++dim) {
    GridSpec g(dim, {7, 5, 4}, {1.0, 0.7, 2.0});
    Snapshot s{0.125, oracle::random_scalar(g, rng), oracle::random_vector(g, rng)};
    const auto crc = write_snapshot(dir / "a.hcns", g, s);
    EXPECT_EQ(crc, file_crc32(dir / "a.hcns"));
    const auto back = read_snapshot(dir / "a.hcns");
    EXPECT_TRUE(back.grid == g);
    EXPECT_EQ(back.snapshot.t, s.t);
    EXPECT_EQ(back.snapshot.p.values, s.p.values);
    EXPECT_EQ(back.snapshot.m.values, s.m.values);
  }
}

TEST(SnapshotIo, RejectsCorruptFiles) {
  std::mt19937_64 rng(53);
  auto g = GridSpec::uniform(2, 4);
  const auto bytes = encode_snapshot(g, {0.0, oracle::random_scalar(g, rng), VectorField(g)});
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_snapshot(bad, "magic"), FormatError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(decode_snapshot(bad, "version"), FormatError);
  bad.assign(bytes.begin(), bytes.end() - 3);
  EXPECT_THROW(decode_snapshot(bad, "truncated"), FormatError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_snapshot(bad, "trailing"), FormatError);
}

TEST(Simulation, ZeroRunStaysZero) {
  const auto dir = scratch_dir("zero");
  auto c = SimConfig::preset("zero");
  c.cells = {8, 8, 8};
  c.outdir = dir.string();
  const auto res = run_simulation(c);
  EXPECT_EQ(res.manifest.snapshots.size(), 5u);
  SnapshotManifest man;
  const auto s = load_series(dir / kManifestName, &man);
  EXPECT_EQ(s.size(), 5u);
  for (const auto& snap : s.snapshots()) {
    EXPECT_EQ(snap.p.max_abs(), 0.0);
    EXPECT_EQ(snap.m.max_abs(), 0.0);
  }
  EXPECT_DOUBLE_EQ(s[s.size() - 1].t, c.T);
  const auto csv = slurp(dir / kDiagnosticsName);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,t,lyapunov,energy_residual,max_abs_m,max_abs_p,cg_iters");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 21);
}

TEST(Simulation, ChecksumMismatchDetected) {
  const auto dir = scratch_dir("crc");
  auto c = small_smooth();
  c.T = 0.01;
  c.outdir = dir.string();
  run_simulation(c);
  {
    std::fstream f(dir / detail::snapshot_name(2), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(60);
    f.put('\x7f');
  }
  EXPECT_THROW(load_series(dir / kManifestName), FormatError);
}

TEST(Simulation, DeterministicOutputs) {
  const auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
  auto c = small_smooth();
  c.T = 0.05;
  c.outdir = a.string();
  run_simulation(c);
  c.outdir = b.string();
  run_simulation(c);
  EXPECT_EQ(slurp(a / kDiagnosticsName), slurp(b / kDiagnosticsName));
  EXPECT_EQ(slurp(a / detail::snapshot_name(10)), slurp(b / detail::snapshot_name(10)));
}

TEST(Simulation, ResumeIsBitExact) {
  const auto full = scratch_dir("full"), half = scratch_dir("half");
  auto c = small_smooth();
  c.outdir = full.string();
  run_simulation(c);
  c.outdir = half.string();
  c.T = 0.05;
  run_simulation(c);
  const auto res = resume_simulation(half / kManifestName, 0.1);
  EXPECT_EQ(res.manifest.snapshots.back().step, 20u);
  const auto x = read_snapshot(full / detail::snapshot_name(20)).snapshot;
  const auto y = read_snapshot(half / detail::snapshot_name(20)).snapshot;
  EXPECT_LE(oracle::max_abs_diff(x.m.values, y.m.values), 1e-12);
  EXPECT_LE(oracle::max_abs_diff(x.p.values, y.p.values), 1e-12);
  EXPECT_EQ(slurp(full / kDiagnosticsName), slurp(half / kDiagnosticsName));
  const auto s = load_series(half / kManifestName);
  EXPECT_EQ(s.size(), 5u);
}

TEST(Simulation, FailureReportsStepAndLastSnapshot) {
  const auto dir = scratch_dir("fail");
  auto c = small_smooth();
  c.cadence = 0.01;
  c.outdir = dir.string();
  RunOptions opt;
  opt.on_step = [](const StepRecord& r) {
    if (r.step == 5) throw NonConvergenceError("injected", {});
  };
  try {
    run_simulation(c, opt);
    FAIL() << "no error";
  } catch (const SimulationError& e) {
    EXPECT_EQ(e.step(), 5u);
    EXPECT_EQ(e.last_snapshot(), detail::snapshot_name(4));
  }
  const auto s = load_series(dir / kManifestName);
  EXPECT_EQ(s.size(), 3u);
}

TEST(Simulation, WeakClassNormsFinite) {
  auto c = small_smooth();
  RunOptions opt;
  opt.write_files = false;
  opt.keep_series = true;
  const auto res = run_simulation(c, opt);
  const auto w = weak_class_norms(res.series, c.params.gamma);
  EXPECT_TRUE(w.finite());
  EXPECT_GT(w.grad_m, 0.0);
  EXPECT_GT(w.m_dot_grad_p, 0.0);
  for (const auto& r : res.log) EXPECT_LE(r.energy_residual, 10 * c.tol);
}

TEST(Simulation, PressureIsContinuousInTime) {
  // Largest jump |p^{n+1} - p^n|_2 per step halves with dt.
  auto c = small_smooth();
  c.T = 0.05;
  auto jump = [&](double dt) {
    c.params.dt = dt;
    c.cadence = dt;
    RunOptions opt;
    opt.write_files = false;
    opt.keep_series = true;
    const auto s = run_simulation(c, opt).series;
    double mx = 0.0;
    for (std::size_t k = 1; k < s.size(); ++k) {
      double d = 0.0;
      for (std::size_t j = 0; j < s[k].p.size(); ++j) d += std::pow(s[k].p[j] - s[k - 1].p[j], 2);
      mx = std::max(mx, std::sqrt(d * s.grid().cell_volume()));
    }
    return mx;
  };
  const double ratio = jump(0.005) / jump(0.0025);
  EXPECT_GE(ratio, 1.6);
  EXPECT_LE(ratio, 2.4);
}

TEST(Simulation, WarmStartDoesNotChangePressure) {
  std::mt19937_64 rng(54);
  auto g = GridSpec::uniform(2, 16);
  auto m = oracle::random_vector(g, rng);
  auto S = oracle::random_scalar(g, rng);
  const auto cold = solve_pressure(m, S, 1e-13, nullptr).p;
  auto guess = oracle::random_scalar(g, rng);
  const auto warm = solve_pressure(m, S, 1e-13, &guess).p;
  EXPECT_LE(oracle::max_abs_diff(cold.values, warm.values), 1e-9 * cold.max_abs());
}
