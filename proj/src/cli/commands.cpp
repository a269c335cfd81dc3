#include "sfs/cli/commands.hpp"

#include "sfs/cli/config.hpp"
#include "sfs/diagnostics.hpp"
#include "sfs/log_space.hpp"
#include "sfs/quadrature_oracle.hpp"
#include "sfs/rng.hpp"
#include "sfs/sample_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace sfs::cli {

namespace {

namespace fs = std::filesystem;

struct Overrides {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<std::string> format;
};

ExperimentConfig load(const Overrides& o) {
  ExperimentConfig cfg = load_config(o.config_path);
  if (o.out) cfg.run.out = *o.out;
  if (o.threads) {
    if (*o.threads < 0) throw ConfigError("--threads must be >= 0", 0);
    cfg.run.threads = *o.threads;
  }
  if (o.format) cfg.run.format = *o.format;
  return cfg;
}

fs::path prepare_out(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.run.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory '" + cfg.run.out + "'");
  return dir;
}

std::ofstream open_out(const fs::path& p, bool binary = false) {
  std::ofstream os(p, binary ? std::ios::binary | std::ios::out : std::ios::out);
  if (!os) throw UsageError("cannot write '" + p.string() + "'");
  return os;
}

void write_provenance(const fs::path& dir, const ExperimentConfig& cfg, const char* command,
                      const nlohmann::ordered_json& outcome) {
  nlohmann::ordered_json j;
  j["tool"] = "sf-sampler";
  j["version"] = kVersion;
  j["command"] = command;
  j["seed"] = cfg.run.master_seed;
  j["outcome"] = outcome;
  j["config"] = nlohmann::ordered_json::parse(config_json(cfg));
  open_out(dir / "provenance.json") << j.dump(2) << '\n';
}

RowMatrix reference_for(const ExperimentConfig& cfg, const TargetSpec& target) {
  if (cfg.metrics.reference_size == 0) return {};
  return sample_reference(target, cfg.metrics.reference_size,
                          derive_seed(cfg.run.master_seed, {static_cast<std::uint64_t>(Stream::reference)}));
}

bool over_threshold(const Ensemble& e) { return e.flagged_paths() * 100 > e.size(); }

int cmd_sample(const Overrides& o) {
  const ExperimentConfig cfg = load(o);
  if (cfg.grid.n.size() != 1 || cfg.target.epsilon.size() != 1)
    throw ConfigError("sample takes a single n and epsilon; use sweep for lists", 0);
  const TargetSpec target = build_target(cfg);
  const double eps = cfg.target.epsilon.front();
  const RunConfig rc = build_run_config(cfg, target, cfg.grid.n.front(), eps);
  const Ensemble ens = eps > 0.0 ? em_run(make_epsilon_target(target, eps), rc) : em_run(target, rc);

  const fs::path dir = prepare_out(cfg);
  const SampleHeader header{kVersion, cfg.run.master_seed, target.name};
  if (cfg.run.format != "bin") {
    auto os = open_out(dir / "samples.csv");
    write_samples_csv(os, ens.terminal, header);
  }
  if (cfg.run.format != "csv") {
    auto os = open_out(dir / "samples.bin", true);
    write_samples_binary(os, ens.terminal, header);
  }
  const RowMatrix reference = reference_for(cfg, target);
  if (reference.size()) {
    const MetricsReport report = compute_metrics(ens, reference, target, build_metrics_options(cfg));
    open_out(dir / "metrics.csv") << metrics_csv_header() << '\n' << metrics_csv_row(report) << '\n';
    open_out(dir / "metrics.json") << metrics_json(report) << '\n';
  }
  const bool degenerate = over_threshold(ens);
  write_provenance(dir, cfg, "sample",
                   {{"paths", ens.size()},
                    {"flagged_paths", ens.flagged_paths()},
                    {"clamp_events", ens.total_clamp_events()},
                    {"degenerate_events", ens.total_degenerate_events()}});
  if (degenerate) {
    std::cerr << "sf-sampler: " << ens.flagged_paths() << " of " << ens.size()
              << " paths flagged (degenerate or clamped drift), above the 1% threshold\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_sweep(const Overrides& o) {
  const ExperimentConfig cfg = load(o);
  const TargetSpec target = build_target(cfg);
  const RowMatrix reference = reference_for(cfg, target);
  const fs::path dir = prepare_out(cfg);
  auto csv = open_out(dir / "metrics.csv");
  csv << metrics_csv_header() << '\n';
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  bool degenerate = false;
  for (double eps : cfg.target.epsilon) {
    // The clamp default depends on eps, so each eps is its own sweep.
    const RunConfig base = build_run_config(cfg, target, cfg.grid.n.front(), eps);
    em_sweep(target, base, cfg.grid.n, {eps}, [&](const SweepCell& cell) {
      MetricsReport report;
      report.n = cell.n;
      report.epsilon = cell.epsilon;
      report.k = cell.ensemble.size();
      report.m = cfg.drift.mc_batch;
      report.flagged_paths = cell.ensemble.flagged_paths();
      if (reference.size()) {
        MetricsOptions mo = build_metrics_options(cfg);
        mo.seed = sweep_cell_seed(mo.seed, cell.n, cell.epsilon);
        report = compute_metrics(cell.ensemble, reference, target, mo);
      }
      csv << metrics_csv_row(report) << '\n';
      csv.flush();
      cells.push_back({{"n", cell.n},
                       {"epsilon", cell.epsilon},
                       {"seed", sweep_cell_seed(cfg.run.master_seed, cell.n, cell.epsilon)},
                       {"flagged_paths", report.flagged_paths}});
      degenerate = degenerate || over_threshold(cell.ensemble);
    });
  }
  write_provenance(dir, cfg, "sweep", {{"cells", cells}});
  if (degenerate) {
    std::cerr << "sf-sampler: at least one cell has more than 1% flagged paths\n";
    return kExitRuntime;
  }
  return kExitOk;
}

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> xs(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) xs[static_cast<std::size_t>(i)] = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
  return xs;
}

int cmd_oracle_check(const Overrides& o) {
  const ExperimentConfig cfg = load(o);
  const TargetSpec target = build_target(cfg);
  const OracleBlock& ob = cfg.oracle;
  if (cfg.target.epsilon.size() != 1) throw ConfigError("oracle-check takes a single epsilon", 0);
  const double eps = cfg.target.epsilon.front();
  if (cfg.drift.mode != DriftMode::gradient_ratio && cfg.drift.mode != DriftMode::stein)
    throw ConfigError("oracle-check compares a Monte Carlo drift mode (gradient_ratio or stein)", 0);
  if (!(ob.t_max < cfg.grid.horizon))
    throw ConfigError("oracle-check needs t_max < T; the Monte Carlo drift is defined for t < T only", 0);
  if (target.dim > 2) throw ConfigError("oracle-check supports d <= 2", 0);
  if (eps > 0.0) make_epsilon_target(target, eps);

  DriftConfig dc = cfg.drift;
  dc.mc_batch = ob.m;
  dc.epsilon = eps;
  dc.clamp.reset();
  validate(dc);
  if (dc.mode == DriftMode::gradient_ratio && !target.has_gradient())
    throw ConfigError("gradient_ratio drift needs a target gradient", 0);
  const bool has_exact = eps == 0.0 && (std::holds_alternative<GaussianParams>(target.family) ||
                                        std::holds_alternative<GaussianMixtureParams>(target.family));

  const fs::path dir = prepare_out(cfg);
  auto csv = open_out(dir / "oracle_check.csv");
  csv << "seed,t,y,drift_mc,reference,abs_err,se,quad_order,quad_converged,quad_exact_err,pass\n";
  DriftWorkspace ws;
  Matrix noise(target.dim, ob.m);
  std::int64_t points = 0, passed = 0;
  const auto ts = linspace(ob.t_min, ob.t_max, ob.t_points);
  const auto ys = linspace(ob.y_min, ob.y_max, ob.y_points);
  for (int s = 0; s < ob.seeds; ++s) {
    std::int64_t index = 0;
    for (double t : ts) {
      for (double yv : ys) {
        const Vector y = Vector::Constant(target.dim, yv);
        NormalSource src(derive_seed(cfg.run.master_seed, {static_cast<std::uint64_t>(Stream::drift_estimation),
                                                           static_cast<std::uint64_t>(s),
                                                           static_cast<std::uint64_t>(index++)}));
        src.fill(noise);
        const DriftEstimate mc = drift_mc(target, dc, t, y, noise, ws);

        const QuadratureDrift qd = quadrature_drift(target, t, y, dc.quadrature_order);
        Vector quad = qd.value;
        if (eps > 0.0) quad *= qd.degenerate ? 0.0 : logistic(std::log1p(-eps) + qd.log_h - std::log(eps));
        double quad_exact = std::nan("");
        Vector ref = quad;
        if (has_exact) {
          ref = drift_exact(target, t, y);
          quad_exact = (quad - ref).cwiseAbs().maxCoeff();
        }
        const double slack = (!has_exact && !qd.converged) ? ob.kink_tolerance : 0.0;
        bool ok = true;
        double err = 0.0, se = 0.0;
        for (int k = 0; k < target.dim; ++k) {
          const double e = std::abs(mc.value[k] - ref[k]);
          const double sk = mc.std_error.size() ? mc.std_error[k] : 0.0;
          ok = ok && e <= ob.sd_gate * sk + slack;
          err = std::max(err, e);
          se = std::max(se, sk);
        }
        ok = ok && !mc.degenerate;
        ++points;
        passed += ok;
        csv << s << ',' << format_double(t) << ',' << format_double(yv) << ',' << format_double(mc.value[0]) << ','
            << format_double(ref[0]) << ',' << format_double(err) << ',' << format_double(se) << ',' << qd.order << ','
            << (qd.converged ? 1 : 0) << ',' << (has_exact ? format_double(quad_exact) : "") << ',' << (ok ? 1 : 0)
            << '\n';
      }
    }
  }
  write_provenance(dir, cfg, "oracle-check", {{"points", points}, {"passed", passed}});
  std::cout << "oracle-check: " << passed << " of " << points << " points within the gate\n";
  return passed == points ? kExitOk : kExitRuntime;
}

int cmd_probe(const Overrides& o) {
  const ExperimentConfig cfg = load(o);
  const TargetSpec target = build_target(cfg);
  const Box region = cube(target.dim, cfg.probe.lower, cfg.probe.upper);
  const std::uint64_t seed = derive_seed(cfg.run.master_seed, {static_cast<std::uint64_t>(Stream::probe)});
  const auto a2 = probe_a2(target, region, cfg.probe.pairs, seed);
  const auto a4 = probe_a4(target, region, cfg.probe.pairs, seed);
  std::cout << probe_json(a2, a4) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Schrodinger-Follmer diffusion sampler", "sf-sampler"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Overrides o;
  auto add = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config_path, "config file (YAML, or a provenance.json)")->required();
    sub->add_option("--out", o.out, "output directory (overrides run.out)");
    sub->add_option("--threads", o.threads, "worker threads, 0 = auto (overrides run.threads)");
    sub->add_option("--format", o.format, "sample format (overrides run.format)")
        ->check(CLI::IsMember({"csv", "bin", "both"}));
    return sub;
  };
  CLI::App* sample = add("sample", "simulate an ensemble and write terminal samples");
  CLI::App* sweep = add("sweep", "run every (n, epsilon) cell and write one metrics row per cell");
  CLI::App* oracle = add("oracle-check", "compare the Monte Carlo drift with the quadrature oracle");
  CLI::App* probe = add("probe", "estimate the Lipschitz constants of log phi and phi");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    if (sample->parsed()) return cmd_sample(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (oracle->parsed()) return cmd_oracle_check(o);
    if (probe->parsed()) return cmd_probe(o);
  } catch (const ConfigError& e) {
    std::cerr << "sf-sampler: " << o.config_path << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "sf-sampler: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace sfs::cli
