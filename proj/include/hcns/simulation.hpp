#pragma once

// Coupled time loop: pressure solve, conductance step, snapshots and logs.
//
// The state carried between steps is (t, m^n, p^n) with p^n solved at m^n.
// One step advances m with p^n, then solves p^{n+1} at m^{n+1} warm-started
// from p^n. Snapshots store (t, p, m), so a run restarted from a snapshot
// continues bit-for-bit.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hcns/energy.hpp"
#include "hcns/snapshot_io.hpp"

namespace hcns {

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "inf" || t == "infinity") return std::numeric_limits<double>::infinity();
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError("key '" + key + "': not a number: '" + v + "'");
  return x;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  long long x = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError("key '" + key + "': not an integer: '" + v + "'");
  return x;
}

inline std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline std::string format_double(double x) {
  if (std::isinf(x)) return "inf";
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace detail

/// Run configuration. Text form is flat `key = value` lines; `#` starts a comment.
struct SimConfig {
  int n = 2;
  Index cells{64, 64, 64};
  Point extent{1.0, 1.0, 1.0};
  StepParams params{};
  double T = 1.0;
  double q = std::numeric_limits<double>::infinity();
  double beta = std::numeric_limits<double>::quiet_NaN();  // NaN: centred default
  std::string source = "gaussian";  // zero | gaussian | point | file:PATH
  std::string m0 = "bump";          // zero | bump | modes
  double cadence = 0.05;
  double tol = 1e-10;
  std::string outdir = "hcns_run";
  double source_amp = 10.0;
  double source_width = 0.1;
  Point source_center{0.5, 0.5, 0.5};  // fractions of the extent
  double m0_amp = 1.0;
  std::uint64_t seed = 1;

  GridSpec grid() const { return GridSpec(n, cells, extent); }

  /// min{2 - N/q, 1}, the upper end of the admissible beta interval.
  double beta_cap() const { return std::min(2.0 - n / q, 1.0); }

  /// beta, or the centre of (0, beta_cap) when unset.
  double beta_value() const { return std::isnan(beta) ? 0.5 * beta_cap() : beta; }

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(T / params.dt)); }

  std::size_t snapshot_every() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cadence / params.dt)));
  }

  double effective_cadence() const { return snapshot_every() * params.dt; }

  void validate() const {
    (void)grid();
    params.validate();
    if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("T must be positive");
    const double ratio = T / params.dt;
    if (std::abs(ratio - std::llround(ratio)) > 1e-9 * std::max(1.0, ratio))
      throw ConfigError("T must be an integer multiple of dt");
    if (!(q > 0.5 * n)) throw ConfigError("q must satisfy q > N/2");
    const double b = beta_value();
    if (!(b > 0.0 && b < beta_cap()))
      throw ConfigError("beta must satisfy 0 < beta < min(2 - N/q, 1) = " + detail::format_double(beta_cap()));
    if (!(cadence > 0.0)) throw ConfigError("cadence must be positive");
    if (!(tol > 0.0 && tol < 1.0)) throw ConfigError("tol must lie in (0, 1)");
    if (source != "zero" && source != "gaussian" && source != "point" && source.rfind("file:", 0) != 0)
      throw ConfigError("unknown source preset '" + source + "'");
    if (m0 != "zero" && m0 != "bump" && m0 != "modes") throw ConfigError("unknown m0 preset '" + m0 + "'");
    if (!(source_width > 0.0)) throw ConfigError("source_width must be positive");
  }

  static SimConfig preset(const std::string& name) {
    SimConfig c;
    if (name == "default") return c;
    if (name == "zero") {
      c.source = "zero";
      c.m0 = "zero";
      c.cells = {32, 32, 32};
      c.params.dt = 0.01;
      c.T = 0.2;
      return c;
    }
    if (name == "leaf") {
      // Leaf venation: gamma = 1.
      c.params.D = 0.1;
      c.params.E = 2.0;
      c.params.gamma = 1.0;
      c.params.dt = 0.002;
      c.T = 1.0;
      c.cells = {64, 64, 64};
      c.source = "gaussian";
      c.source_amp = 20.0;
      c.source_width = 0.15;
      c.m0 = "bump";
      c.m0_amp = 1.0;
      c.cadence = 0.05;
      return c;
    }
    if (name == "smooth") {
      c.params.D = 0.5;
      c.params.E = 1.0;
      c.params.gamma = 1.5;
      c.params.dt = 0.005;
      c.T = 0.5;
      c.cells = {32, 32, 32};
      c.source_amp = 10.0;
      c.source_width = 0.15;
      c.m0_amp = 1.0;
      c.cadence = 0.05;
      return c;
    }
    throw ConfigError("unknown preset '" + name + "'");
  }

  void set(const std::string& key_in, const std::string& value) {
    const std::string key = detail::trim(key_in);
    const std::string v = detail::trim(value);
    if (key == "preset") {
      *this = preset(v);
    } else if (key == "n") {
      n = static_cast<int>(detail::parse_int(key, v));
    } else if (key == "cells") {
      const auto parts = detail::split_commas(v);
      if (parts.size() == 1) {
        const int c = static_cast<int>(detail::parse_int(key, parts[0]));
        cells = {c, c, c};
      } else {
        if (parts.size() > 3) throw ConfigError("cells: at most 3 entries");
        for (std::size_t a = 0; a < parts.size(); ++a) cells[a] = static_cast<int>(detail::parse_int(key, parts[a]));
      }
    } else if (key == "extent") {
      const auto parts = detail::split_commas(v);
      if (parts.size() == 1) {
        const double e = detail::parse_double(key, parts[0]);
        extent = {e, e, e};
      } else {
        if (parts.size() > 3) throw ConfigError("extent: at most 3 entries");
        for (std::size_t a = 0; a < parts.size(); ++a) extent[a] = detail::parse_double(key, parts[a]);
      }
    } else if (key == "source_center") {
      const auto parts = detail::split_commas(v);
      if (parts.size() > 3) throw ConfigError("source_center: at most 3 entries");
      for (std::size_t a = 0; a < parts.size(); ++a) source_center[a] = detail::parse_double(key, parts[a]);
    } else if (key == "D") {
      params.D = detail::parse_double(key, v);
    } else if (key == "E") {
      params.E = detail::parse_double(key, v);
    } else if (key == "gamma") {
      params.gamma = detail::parse_double(key, v);
    } else if (key == "dt") {
      params.dt = detail::parse_double(key, v);
    } else if (key == "eps_m") {
      params.eps_m = detail::parse_double(key, v);
    } else if (key == "T") {
      T = detail::parse_double(key, v);
    } else if (key == "q") {
      q = detail::parse_double(key, v);
    } else if (key == "beta") {
      beta = v == "auto" ? std::numeric_limits<double>::quiet_NaN() : detail::parse_double(key, v);
    } else if (key == "source") {
      source = v;
    } else if (key == "m0") {
      m0 = v;
    } else if (key == "cadence") {
      cadence = detail::parse_double(key, v);
    } else if (key == "tol") {
      tol = detail::parse_double(key, v);
    } else if (key == "outdir") {
      outdir = v;
    } else if (key == "source_amp") {
      source_amp = detail::parse_double(key, v);
    } else if (key == "source_width") {
      source_width = detail::parse_double(key, v);
    } else if (key == "m0_amp") {
      m0_amp = detail::parse_double(key, v);
    } else if (key == "seed") {
      seed = static_cast<std::uint64_t>(detail::parse_int(key, v));
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  /// Applies `key=value`.
  void set_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    set(kv.substr(0, eq), kv.substr(eq + 1));
  }

  static SimConfig parse(std::istream& in, const std::string& name = "config") {
    SimConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key = value");
      try {
        c.set(line.substr(0, eq), line.substr(eq + 1));
      } catch (const ConfigError& e) {
        throw ConfigError(name + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return c;
  }

  static SimConfig parse_text(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static SimConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config");
    return parse(in, path.string());
  }

  /// Canonical key = value text; parse(to_text()) reproduces the config.
  std::string to_text() const {
    std::ostringstream os;
    for (const auto& [k, v] : entries()) os << k << " = " << v << '\n';
    return os.str();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    for (const auto& [k, v] : entries()) j[k] = v;
    return j;
  }

  static SimConfig from_json(const nlohmann::ordered_json& j) {
    SimConfig c;
    for (const auto& [k, v] : j.items()) c.set(k, v.is_string() ? v.get<std::string>() : v.dump());
    return c;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries() const {
    auto list = [](auto arr, int count) {
      std::string s;
      for (int a = 0; a < count; ++a) {
        if (a) s += ",";
        if constexpr (std::is_same_v<std::decay_t<decltype(arr[0])>, int>) s += std::to_string(arr[a]);
        else s += detail::format_double(arr[a]);
      }
      return s;
    };
    return {{"n", std::to_string(n)},
            {"cells", list(cells, n)},
            {"extent", list(extent, n)},
            {"D", detail::format_double(params.D)},
            {"E", detail::format_double(params.E)},
            {"gamma", detail::format_double(params.gamma)},
            {"dt", detail::format_double(params.dt)},
            {"eps_m", detail::format_double(params.eps_m)},
            {"T", detail::format_double(T)},
            {"q", detail::format_double(q)},
            {"beta", std::isnan(beta) ? std::string("auto") : detail::format_double(beta)},
            {"source", source},
            {"source_amp", detail::format_double(source_amp)},
            {"source_width", detail::format_double(source_width)},
            {"source_center", list(source_center, n)},
            {"m0", m0},
            {"m0_amp", detail::format_double(m0_amp)},
            {"seed", std::to_string(seed)},
            {"cadence", detail::format_double(cadence)},
            {"tol", detail::format_double(tol)},
            {"outdir", outdir}};
  }
};

namespace detail {

inline ScalarField read_scalar_file(const std::string& path, const GridSpec& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open source file");
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::string(magic, 4) == "HCNS") {
    auto loaded = read_snapshot(path);
    if (!(loaded.grid == g)) throw ConfigError(path + ": source grid differs from the run grid");
    return loaded.snapshot.p;
  }
  in.clear();
  in.seekg(0);
  ScalarField f(g);
  std::size_t k = 0;
  double x = 0.0;
  while (in >> x) {
    if (k == f.size()) throw ConfigError(path + ": more values than grid cells");
    f[k++] = x;
  }
  if (!in.eof()) throw ConfigError(path + ": unreadable value");
  if (k != f.size()) throw ConfigError(path + ": expected " + std::to_string(f.size()) + " values");
  require_finite(f, "source file");
  return f;
}

}  // namespace detail

/// The source S from its preset.
inline ScalarField make_source(const SimConfig& c) {
  const GridSpec g = c.grid();
  if (c.source == "zero") return ScalarField(g);
  if (c.source.rfind("file:", 0) == 0) return detail::read_scalar_file(c.source.substr(5), g);
  Point centre{};
  for (int a = 0; a < g.dim(); ++a) centre[a] = c.source_center[a] * g.extent(a);
  double w = c.source_width, amp = c.source_amp;
  if (c.source == "point") {
    // Narrow Gaussian of unit mass times amp, a few cells wide.
    double h = 0.0;
    for (int a = 0; a < g.dim(); ++a) h = std::max(h, g.spacing(a));
    w = 1.5 * h;
    amp = c.source_amp / std::pow(2.0 * std::numbers::pi * w * w, 0.5 * g.dim());
  }
  return ScalarField::sample(g, [&](const Point& x) {
    const double r2 = std::pow(distance(x, centre, g.dim()), 2);
    return amp * std::exp(-r2 / (2.0 * w * w));
  });
}

/// The initial conductance from its preset; every preset vanishes on the walls.
inline VectorField make_initial_conductance(const SimConfig& c) {
  const GridSpec g = c.grid();
  const int n = g.dim();
  if (c.m0 == "zero") return VectorField(g);
  auto sine = [&](const Point& x, int a, int k) { return std::sin(k * std::numbers::pi * x[a] / g.extent(a)); };
  if (c.m0 == "bump") {
    const double scale = c.m0_amp / std::sqrt(static_cast<double>(n));
    return VectorField::sample(g, [&](const Point& x) {
      double b = scale;
      for (int a = 0; a < n; ++a) b *= sine(x, a, 1);
      return std::array<double, 3>{b, n > 1 ? b : 0.0, n > 2 ? b : 0.0};
    });
  }
  // Seeded combination of the lowest three sine modes per axis.
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int modes = n == 1 ? 3 : (n == 2 ? 9 : 27);
  std::vector<double> coef(static_cast<std::size_t>(n) * modes);
  for (auto& x : coef) x = u(rng);
  VectorField m = VectorField::sample(g, [&](const Point& x) {
    std::array<double, 3> v{};
    for (int c2 = 0; c2 < n; ++c2)
      for (int k = 0; k < modes; ++k) {
        double b = coef[static_cast<std::size_t>(c2) * modes + k];
        int rest = k;
        for (int a = 0; a < n; ++a) {
          b *= sine(x, a, 1 + rest % 3);
          rest /= 3;
        }
        v[c2] += b;
      }
    return v;
  });
  const double mx = m.max_abs();
  if (mx > 0.0)
    for (auto& x : m.values) x *= c.m0_amp / mx;
  return m;
}

/// One row of the per-step diagnostics log.
struct StepRecord {
  std::size_t step = 0;
  double t = 0.0;
  double lyapunov = 0.0;
  double energy_residual = 0.0;
  double max_abs_m = 0.0;
  double max_abs_p = 0.0;
  int cg_iters = 0;
  bool cfl_warning = false;
};

struct RunOptions {
  bool write_files = true;   // snapshots, manifest, diagnostics CSV
  bool keep_series = false;  // keep the cadence snapshots in memory
  std::function<void(const StepRecord&)> on_step;
};

struct RunResult {
  SnapshotManifest manifest;
  SpaceTimeSeries series;
  std::vector<StepRecord> log;
  int cfl_warnings = 0;
};

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kDiagnosticsName = "diagnostics.csv";

namespace detail {

inline std::string snapshot_name(std::size_t step) {
  std::ostringstream os;
  os << "snap_" << std::setw(6) << std::setfill('0') << step << ".hcns";
  return os.str();
}

inline void write_log_row(std::ostream& out, const StepRecord& r) {
  out << r.step << ',' << format_double(r.t) << ',' << format_double(r.lyapunov) << ','
      << format_double(r.energy_residual) << ',' << format_double(r.max_abs_m) << ',' << format_double(r.max_abs_p)
      << ',' << r.cg_iters << '\n';
}

struct LoopState {
  std::size_t step = 0;
  double t = 0.0;
  VectorField m;
  ScalarField p;
};

inline RunResult integrate(const SimConfig& cfg, LoopState st, SnapshotManifest man, bool fresh,
                           const RunOptions& opt) {
  const GridSpec g = cfg.grid();
  const ScalarField S = make_source(cfg);
  const std::size_t total = cfg.steps();
  const std::size_t every = cfg.snapshot_every();
  const std::filesystem::path dir(cfg.outdir);

  RunResult res;
  res.series = SpaceTimeSeries(g, cfg.T, cfg.effective_cadence());
  std::ofstream log;
  if (opt.write_files) {
    std::filesystem::create_directories(dir);
    log.open(dir / kDiagnosticsName, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw DataError((dir / kDiagnosticsName).string() + ": cannot write");
    if (fresh) log << "step,t,lyapunov,energy_residual,max_abs_m,max_abs_p,cg_iters\n";
  }
  std::string last_snapshot = man.snapshots.empty() ? std::string() : man.snapshots.back().file;

  auto record = [&](int cg_iters, double residual, bool cfl) {
    StepRecord r;
    r.step = st.step;
    r.t = st.t;
    r.lyapunov = lyapunov_value(st.p, st.m, cfg.params);
    r.energy_residual = residual;
    r.max_abs_m = st.m.max_abs();
    r.max_abs_p = st.p.max_abs();
    r.cg_iters = cg_iters;
    r.cfl_warning = cfl;
    if (opt.write_files) write_log_row(log, r);
    if (opt.on_step) opt.on_step(r);
    res.log.push_back(r);
    const bool snap_due = st.step % every == 0 || st.step == total;
    if (snap_due) {
      Snapshot s{st.t, st.p, st.m};
      ManifestEntry e{st.step, st.t, snapshot_name(st.step), 0, r.lyapunov, r.max_abs_m, r.max_abs_p};
      if (opt.write_files) {
        e.crc32 = write_snapshot(dir / e.file, g, s);
        last_snapshot = e.file;
      }
      man.snapshots.push_back(e);
      if (opt.keep_series) res.series.push_back(std::move(s));
    }
  };

  if (fresh) {
    record(0, dirichlet_identity_residual(st.p, st.m, S), false);
  } else if (opt.keep_series) {
    res.series.push_back({st.t, st.p, st.m});
  }

  while (st.step < total) {
    const std::size_t attempting = st.step + 1;
    try {
      PressureOperator op(st.m);
      auto out = advance_conductance(op, st.m, st.p, cfg.params, cfg.tol);
      res.cfl_warnings += out.cfl_warning ? 1 : 0;
      auto sol = solve_pressure(out.m, S, cfg.tol, &st.p);
      st.m = std::move(out.m);
      st.p = std::move(sol.p);
      ++st.step;
      st.t = st.step * cfg.params.dt;
      record(out.cg_iterations + sol.report.iterations, sol.report.energy_identity_residual, out.cfl_warning);
    } catch (const NumericalError& e) {
      if (opt.write_files) write_manifest(dir / kManifestName, man);
      throw SimulationError("step " + std::to_string(attempting) + ": " + e.what() +
                                (last_snapshot.empty() ? "" : "; last good snapshot " + last_snapshot),
                            attempting, last_snapshot);
    }
  }
  man.horizon = cfg.T;
  if (opt.write_files) write_manifest(dir / kManifestName, man);
  res.manifest = std::move(man);
  return res;
}

}  // namespace detail

/// Runs the configured simulation from t = 0.
inline RunResult run_simulation(const SimConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  const GridSpec g = cfg.grid();
  detail::LoopState st;
  st.m = make_initial_conductance(cfg);
  const ScalarField S = make_source(cfg);
  st.p = solve_initial_pressure(st.m, S, cfg.tol);
  SnapshotManifest man;
  man.config = cfg.to_json();
  man.dim = g.dim();
  man.cells = g.cells();
  man.extent = g.extent();
  man.horizon = cfg.T;
  man.cadence = cfg.effective_cadence();
  man.diagnostics = kDiagnosticsName;
  return detail::integrate(cfg, std::move(st), std::move(man), true, opt);
}

/// Continues a run from the last snapshot of its manifest up to horizon T.
inline RunResult resume_simulation(const std::filesystem::path& manifest_path, double T, const RunOptions& opt = {}) {
  SnapshotManifest man = read_manifest(manifest_path);
  if (man.snapshots.empty()) throw FormatError(manifest_path.string() + ": no snapshots to resume from");
  SimConfig cfg = SimConfig::from_json(man.config);
  cfg.T = T;
  cfg.outdir = manifest_path.parent_path().string();
  cfg.validate();
  const auto& last = man.snapshots.back();
  const auto file = manifest_path.parent_path() / last.file;
  const auto bytes = detail::read_bytes(file);
  if (crc32_of(bytes) != last.crc32) throw FormatError(file.string() + ": checksum mismatch");
  auto loaded = decode_snapshot(bytes, file.string());
  if (!(loaded.grid == cfg.grid())) throw FormatError(file.string() + ": grid differs from config");
  if (last.step > cfg.steps()) throw ConfigError("resume horizon precedes the last snapshot");
  man.config = cfg.to_json();
  detail::LoopState st{last.step, loaded.snapshot.t, std::move(loaded.snapshot.m), std::move(loaded.snapshot.p)};
  return detail::integrate(cfg, std::move(st), std::move(man), false, opt);
}

/// max|p| / |S|_q over the run for each m0 scale.
struct C1Scaling {
  std::vector<double> scales;
  std::vector<double> ratios;
  double spread = 0.0;  // max/min - 1
};

inline C1Scaling c1_scaling_experiment(SimConfig base, const std::vector<double>& scales = {1.0, 2.0, 4.0}) {
  C1Scaling out;
  out.scales = scales;
  RunOptions opt;
  opt.write_files = false;
  opt.keep_series = true;
  const double amp = base.m0_amp;
  for (double s : scales) {
    SimConfig c = base;
    c.m0_amp = amp * s;
    auto res = run_simulation(c, opt);
    out.ratios.push_back(sup_pressure_check(res.series, make_source(c), c.q).ratio);
  }
  const auto [lo, hi] = std::minmax_element(out.ratios.begin(), out.ratios.end());
  out.spread = *lo > 0.0 ? *hi / *lo - 1.0 : 0.0;
  return out;
}

}  // namespace hcns
