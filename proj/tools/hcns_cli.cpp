// hcns: simulate, diagnose and probe stored runs from the command line.
//
// Exit codes: 0 success, 1 input or configuration error, 2 numerical failure,
// 3 a verification study missed its bracket.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hcns/energy.hpp"
#include "hcns/hausdorff.hpp"
#include "hcns/mms.hpp"
#include "hcns/regularity.hpp"
#include "hcns/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kOk = 0, kInputError = 1, kNumericalError = 2, kCheckFailed = 3;

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw hcns::DataError(path.string() + ": cannot write");
  out << j.dump(2) << '\n';
}

hcns::Point to_point(const std::vector<double>& v, int dim, const char* what) {
  if (static_cast<int>(v.size()) != dim)
    throw hcns::ConfigError(std::string(what) + " needs " + std::to_string(dim) + " coordinates");
  hcns::Point p{0, 0, 0};
  for (int a = 0; a < dim; ++a) p[a] = v[a];
  return p;
}

/// Series plus the configuration echoed in its manifest.
struct StoredRun {
  hcns::SpaceTimeSeries series;
  hcns::SimConfig config;
};

StoredRun load_run(const fs::path& manifest) {
  hcns::SnapshotManifest man;
  StoredRun r;
  r.series = hcns::load_series(manifest, &man);
  if (r.series.empty()) throw hcns::FormatError(manifest.string() + ": manifest lists no snapshots");
  r.config = hcns::SimConfig::from_json(man.config);
  return r;
}

struct Options {
  std::string config, preset, out, manifest, points, mms_case = "trig2d";
  std::vector<std::string> overrides;
  int workers = 1;
  // probes
  std::vector<double> y, taus, radii;
  double tau = 0.0, r = 0.0, beta = std::numeric_limits<double>::quiet_NaN(), pitch = 0.0;
  double M = std::numeric_limits<double>::quiet_NaN(), eps = 1.0, d = std::numeric_limits<double>::quiet_NaN();
  double tau_E = 0.25, K = std::numeric_limits<double>::quiet_NaN();
  int n_space = 32, n_time = 8, levels = 3;
  std::size_t t_index = 0;
};

int cmd_simulate(const Options& o) {
  if (o.config.empty() == o.preset.empty()) throw hcns::ConfigError("simulate needs exactly one of --config or --preset");
  auto cfg = o.config.empty() ? hcns::SimConfig::preset(o.preset) : hcns::SimConfig::load(o.config);
  for (const auto& kv : o.overrides) cfg.set_assignment(kv);
  if (!o.out.empty()) cfg.outdir = o.out;
  cfg.validate();
  const auto res = hcns::run_simulation(cfg);
  std::cout << "wrote " << res.manifest.snapshots.size() << " snapshots to " << cfg.outdir << " (" << res.log.size()
            << " steps logged";
  if (res.cfl_warnings > 0) std::cout << ", " << res.cfl_warnings << " steps above the explicit stability estimate";
  std::cout << ")\n";
  return kOk;
}

int cmd_diagnose(const Options& o) {
  const auto run = load_run(o.manifest);
  const auto& s = run.series;
  const auto& cfg = run.config;
  const fs::path dir = o.out.empty() ? fs::path(o.manifest).parent_path() / "diagnose" : fs::path(o.out);
  fs::create_directories(dir);
  const auto S = hcns::make_source(cfg);
  const auto rep = hcns::global_energy_report(s, cfg.params, S, cfg.q);
  hcns::write_energy_csv((dir / "energy.csv").string(), rep);

  double K = o.K;
  if (std::isnan(K)) {
    K = s[0].m.max_abs();
    if (K == 0.0) K = 1.0;
  }
  const auto profiles = hcns::truncation_sweep(s, K, cfg.params.gamma);
  hcns::write_truncation_csv((dir / "truncation.csv").string(), profiles);

  const auto weak = hcns::weak_class_norms(s, cfg.params.gamma);
  ordered_json j;
  j["snapshots"] = s.size();
  j["horizon"] = s[s.size() - 1].t;
  j["source_norm"] = rep.source_norm;
  j["c1_constant"] = rep.c1_constant;
  j["balance_defect"] = rep.rows.back().balance_defect;
  double lmax_rise = 0.0;
  for (std::size_t k = 1; k < rep.rows.size(); ++k)
    lmax_rise = std::max(lmax_rise, rep.rows[k].lyapunov - rep.rows[k - 1].lyapunov);
  j["lyapunov_max_increase"] = lmax_rise;
  j["weak_norms"] = {{"grad_m", weak.grad_m},
                     {"m_2gamma", weak.m_2gamma},
                     {"grad_p", weak.grad_p},
                     {"m_dot_grad_p", weak.m_dot_grad_p},
                     {"finite", weak.finite()}};
  j["truncation_K"] = K;
  write_json(dir / "diagnose.json", j);
  std::cout << std::setprecision(6) << "lyapunov " << rep.rows.front().lyapunov << " -> " << rep.rows.back().lyapunov
            << ", balance defect " << rep.rows.back().balance_defect << ", C1 ratio " << rep.c1_constant
            << "\nwrote " << dir.string() << "\n";
  return weak.finite() ? kOk : kNumericalError;
}

int cmd_scan(const Options& o) {
  const auto run = load_run(o.manifest);
  const auto& s = run.series;
  const auto& g = s.grid();
  const fs::path dir = o.out.empty() ? fs::path(o.manifest).parent_path() / "scan" : fs::path(o.out);
  fs::create_directories(dir);
  double width = g.extent(0);
  for (int a = 1; a < g.dim(); ++a) width = std::min(width, g.extent(a));
  const double pitch = o.pitch > 0.0 ? o.pitch : width / 8.0;
  std::vector<double> taus = o.taus;
  if (taus.empty()) taus.push_back(0.5 * s.horizon());
  hcns::ClassifyConfig cfg;
  cfg.M = o.M;
  cfg.eps = o.eps;
  cfg.d = o.d;
  cfg.beta = std::isnan(o.beta) ? run.config.beta_value() : o.beta;
  cfg.q = run.config.q;
  cfg.radii = o.radii;
  cfg.tau_E = o.tau_E;
  cfg.workers = o.workers;
  const auto lattice = hcns::probe_lattice(g, pitch, taus);
  const auto map = hcns::classify_points(s, lattice, cfg);
  hcns::write_regularity_csv(dir / "regularity.csv", map);
  hcns::write_flagged_points(dir / "flagged.csv", g.dim(), map.flagged());
  ordered_json j;
  j["probes"] = map.probes.size();
  j["regular"] = map.count(hcns::PointClass::Regular);
  j["undecided"] = map.count(hcns::PointClass::Undecided);
  j["singular"] = map.count(hcns::PointClass::Singular);
  j["pitch"] = pitch;
  j["taus"] = taus;
  j["radii"] = map.radii;
  j["M"] = map.M;
  j["eps"] = map.eps;
  j["d"] = map.d;
  j["beta"] = map.beta;
  j["tau_E"] = map.tau_E;
  j["required_cadence"] = 0.25 * map.radii.back() * map.radii.back();
  write_json(dir / "scan.json", j);
  std::cout << map.probes.size() << " probes: " << j["regular"] << " regular, " << j["undecided"] << " undecided, "
            << j["singular"] << " singular candidates\nwrote " << dir.string() << "\n";
  if (map.count(hcns::PointClass::Undecided) == map.probes.size() && s.cadence() > j["required_cadence"].get<double>())
    std::cout << "note: snapshot cadence " << s.cadence() << " exceeds r^2/4 = " << j["required_cadence"]
              << " at the smallest radius\n";
  return kOk;
}

int cmd_dimension(const Options& o) {
  int dim = 0;
  const auto pts = hcns::read_flagged_points(o.points, &dim);
  const fs::path dir = o.out.empty() ? fs::path(o.points).parent_path() : fs::path(o.out);
  fs::create_directories(dir);
  const auto radii = o.radii.empty() ? hcns::default_cover_radii(1.0) : o.radii;
  std::vector<double> s_grid;
  for (int k = 0; k <= 2 * (dim + 2); ++k) s_grid.push_back(0.5 * k);
  hcns::write_cover_csv(dir / "cover.csv", hcns::cover_profile(pts, dim, radii, s_grid, o.workers));
  if (pts.empty()) {
    write_json(dir / "dimension.json", {{"dim", dim}, {"points", 0}, {"dim_est", nullptr}});
    std::cout << "no flagged points; dimension undefined\n";
    return kOk;
  }
  const auto est = hcns::dimension_estimate(pts, dim, radii, o.pitch, 400, 20240601, o.workers);
  auto j = hcns::to_json(est);
  j["points"] = pts.size();
  write_json(dir / "dimension.json", j);
  std::cout << std::setprecision(4) << "dim_est " << est.dim_est << " [" << est.ci_low << ", " << est.ci_high
            << "], residual " << est.residual << "\nwrote " << dir.string() << "\n";
  if (est.below_floor) std::cout << "note: radii below the resolution floor " << est.resolution_floor << "\n";
  return kOk;
}

int cmd_rescale(const Options& o) {
  const auto run = load_run(o.manifest);
  const auto& s = run.series;
  const fs::path dir = o.out.empty() ? fs::path(o.manifest).parent_path() / "rescaled" : fs::path(o.out);
  const double beta = std::isnan(o.beta) ? run.config.beta_value() : o.beta;
  const auto rw =
      hcns::rescale_window(s, {to_point(o.y, s.grid().dim(), "--y"), o.tau, o.r}, beta, o.n_space, o.n_time);
  hcns::write_rescaled_window(dir, rw);
  std::cout << std::setprecision(6) << "lambda " << rw.lambda << ", psi norm " << rw.psi_norm << ", w norm "
            << rw.w_norm << "\nwrote " << dir.string() << "\n";
  return kOk;
}

int cmd_decompose(const Options& o) {
  const auto run = load_run(o.manifest);
  const auto& s = run.series;
  const fs::path dir = o.out.empty() ? fs::path(o.manifest).parent_path() / "decompose" : fs::path(o.out);
  fs::create_directories(dir);
  const auto dec = hcns::decompose_pressure(s, to_point(o.y, s.grid().dim(), "--y"), o.r, o.t_index);
  const auto& g = dec.grid;
  std::ofstream csv(dir / "decomposition.csv");
  if (!csv) throw hcns::DataError((dir / "decomposition.csv").string() + ": cannot write");
  csv << std::setprecision(17);
  for (int a = 0; a < g.dim(); ++a) csv << 'x' << a << ',';
  csv << "interior,p,eta,phi\n";
  for (std::size_t k = 0; k < g.cell_count(); ++k) {
    if (!dec.in_ball[k]) continue;
    const auto x = g.center(k);
    for (int a = 0; a < g.dim(); ++a) csv << x[a] + dec.offset[a] * g.spacing(a) << ',';
    csv << int(dec.interior[k]) << ',' << dec.p[k] << ',' << dec.eta[k] << ',' << dec.phi[k] << '\n';
  }
  ordered_json j;
  j["y"] = o.y;
  j["r"] = o.r;
  j["t_index"] = o.t_index;
  j["t"] = s[o.t_index].t;
  j["a"] = dec.a;
  j["cg_iterations"] = dec.cg_iterations;
  j["relative_residual"] = dec.relative_residual;
  const double full = dec.mean_oscillation(dec.eta, o.r);
  j["eta_oscillation_ratio_half"] = full > 0.0 ? dec.mean_oscillation(dec.eta, 0.5 * o.r) / full : 0.0;
  write_json(dir / "decomposition.json", j);
  std::cout << "CG " << dec.cg_iterations << " iterations\nwrote " << dir.string() << "\n";
  return kOk;
}

int cmd_mms(const Options& o) {
  const auto st = hcns::mms_study(o.mms_case, o.levels);
  std::cout << std::setprecision(6) << std::scientific;
  std::cout << "spatial study (dt ~ h^2)\n   cells          h      err_p      err_m\n";
  for (const auto& l : st.spatial)
    std::cout << std::setw(8) << l.cells << ' ' << l.h << ' ' << l.err_p << ' ' << l.err_m << '\n';
  std::cout << "temporal study\n            dt      err_m  |m_dt - m_dt/2|\n";
  for (const auto& l : st.temporal) std::cout << "  " << l.dt << ' ' << l.err_m << ' ' << l.diff_m << '\n';
  std::cout << std::defaultfloat << std::setprecision(4);
  if (st.exact) {
    std::cout << "all errors vanish (exact case)\n";
  } else {
    std::cout << "spatial order (p) " << st.spatial_order_p << " in [" << hcns::MmsStudy::kSpatialLo << ", "
              << hcns::MmsStudy::kSpatialHi << "]: " << (st.spatial_ok() ? "ok" : "MISSED") << '\n'
              << "temporal order (m) " << st.temporal_order_m << " in [" << hcns::MmsStudy::kTemporalLo << ", "
              << hcns::MmsStudy::kTemporalHi << "]: " << (st.temporal_ok() ? "ok" : "MISSED") << '\n';
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    ordered_json j;
    j["case"] = st.name;
    j["exact"] = st.exact;
    if (!st.exact) {
      j["spatial_order_p"] = st.spatial_order_p;
      j["temporal_order_m"] = st.temporal_order_m;
    }
    j["errors_decrease"] = st.errors_decrease;
    for (const auto& l : st.spatial)
      j["spatial"].push_back({{"cells", l.cells}, {"dt", l.dt}, {"err_p", l.err_p}, {"err_m", l.err_m}});
    for (const auto& l : st.temporal)
      j["temporal"].push_back({{"dt", l.dt}, {"err_m", l.err_m}, {"diff_m", l.diff_m}});
    j["pass"] = st.pass();
    write_json(fs::path(o.out) / "mms.json", j);
  }
  return st.pass() ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hcns: transport-network PDE simulator and regularity diagnostics"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--workers", o.workers, "Worker threads for probe and cover loops")->check(CLI::PositiveNumber);

  auto* sim = app.add_subcommand("simulate", "Run a simulation from a config file or preset");
  sim->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  sim->add_option("--preset", o.preset, "Preset name (leaf, smooth, zero)");
  sim->add_option("--set", o.overrides, "Override key=value (repeatable)");
  sim->add_option("--out", o.out, "Output directory (overrides outdir)");

  auto* diag = app.add_subcommand("diagnose", "Global energy identities and truncated energies of a stored run");
  diag->add_option("manifest", o.manifest, "manifest.json of the run")->required();
  diag->add_option("--out", o.out, "Output directory");
  diag->add_option("--K", o.K, "Truncation level (default max|m| at t = 0)");

  auto* scan = app.add_subcommand("scan", "Classify a probe lattice as regular, undecided or singular");
  scan->add_option("manifest", o.manifest, "manifest.json of the run")->required();
  scan->add_option("--out", o.out, "Output directory");
  scan->add_option("--pitch", o.pitch, "Lattice pitch (default min extent / 8)");
  scan->add_option("--tau", o.taus, "Probe times")->delimiter(',');
  scan->add_option("--radii", o.radii, "Decreasing radius ladder")->delimiter(',');
  scan->add_option("--M", o.M, "Cap on |m_{z,r}|");
  scan->add_option("--eps", o.eps, "H_eps exponent");
  scan->add_option("--d", o.d, "Integrability exponent d");
  scan->add_option("--beta", o.beta, "Scaled-energy exponent");
  scan->add_option("--tau-E", o.tau_E, "Energy threshold at the smallest rung");

  auto* dimc = app.add_subcommand("dimension", "Parabolic box-counting dimension of a flagged point set");
  dimc->add_option("points", o.points, "Flagged-points CSV")->required();
  dimc->add_option("--out", o.out, "Output directory");
  dimc->add_option("--radii", o.radii, "Cover radii")->delimiter(',');
  dimc->add_option("--pitch", o.pitch, "Probe lattice pitch, for the resolution floor");

  auto* resc = app.add_subcommand("rescale", "Rescale a cylinder of a stored run to the unit cylinder");
  resc->add_option("manifest", o.manifest, "manifest.json of the run")->required();
  resc->add_option("--y", o.y, "Probe centre")->delimiter(',')->required();
  resc->add_option("--tau", o.tau, "Probe time")->required();
  resc->add_option("--r", o.r, "Probe radius")->required();
  resc->add_option("--beta", o.beta, "Scaled-energy exponent");
  resc->add_option("--n-space", o.n_space, "Lattice cells per axis");
  resc->add_option("--n-time", o.n_time, "Time levels");
  resc->add_option("--out", o.out, "Output directory");

  auto* deco = app.add_subcommand("decompose", "Split p = eta + phi on a ball at one snapshot");
  deco->add_option("manifest", o.manifest, "manifest.json of the run")->required();
  deco->add_option("--y", o.y, "Ball centre")->delimiter(',')->required();
  deco->add_option("--r", o.r, "Ball radius")->required();
  deco->add_option("--t-index", o.t_index, "Snapshot index");
  deco->add_option("--out", o.out, "Output directory");

  auto* mms = app.add_subcommand("mms", "Manufactured-solution convergence study");
  mms->add_option("--case", o.mms_case, "Case name (trig2d, zero)");
  mms->add_option("--levels", o.levels, "Refinement levels");
  mms->add_option("--out", o.out, "Output directory for mms.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*sim) return cmd_simulate(o);
    if (*diag) return cmd_diagnose(o);
    if (*scan) return cmd_scan(o);
    if (*dimc) return cmd_dimension(o);
    if (*resc) return cmd_rescale(o);
    if (*deco) return cmd_decompose(o);
    if (*mms) return cmd_mms(o);
  } catch (const hcns::NumericalError& e) {
    std::cerr << "hcns: numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const hcns::Error& e) {
    std::cerr << "hcns: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "hcns: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}
