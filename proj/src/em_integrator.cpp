#include "sfs/em_integrator.hpp"

#include "sfs/log_space.hpp"
#include "sfs/quadrature_oracle.hpp"
#include "sfs/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace sfs {

void validate(const RunConfig& cfg) {
  if (cfg.grid.n < 1) throw UsageError("step count n must be positive");
  if (!(cfg.grid.horizon > 0.0)) throw UsageError("horizon T must be positive");
  if (cfg.ensemble_size < 1) throw UsageError("ensemble_size must be positive");
  if (cfg.threads < 0) throw UsageError("threads must be >= 0");
  validate(cfg.drift);
}

std::int64_t Ensemble::flagged_paths() const {
  return std::count_if(flags.begin(), flags.end(), [](const PathFlags& f) { return f.flagged(); });
}

std::int64_t Ensemble::total_clamp_events() const {
  std::int64_t s = 0;
  for (const auto& f : flags) s += f.clamp_events;
  return s;
}

std::int64_t Ensemble::total_degenerate_events() const {
  std::int64_t s = 0;
  for (const auto& f : flags) s += f.degenerate_events;
  return s;
}

namespace {

void check_compatible(const TargetSpec& target, const RunConfig& cfg) {
  validate(cfg);
  if (cfg.grid.horizon != target.horizon) throw UsageError("grid horizon differs from the target's T");
  const DriftConfig& d = cfg.drift;
  if (d.epsilon > 0.0 && !target.normalized) throw UsageError("epsilon > 0 needs a normalized target");
  switch (d.mode) {
    case DriftMode::gradient_ratio:
      if (!target.has_gradient()) throw UsageError("gradient_ratio drift needs grad_log_rho on '" + target.name + "'");
      break;
    case DriftMode::stein:
      if (d.terminal_policy == TerminalPolicy::analytic_limit && !target.has_gradient())
        throw UsageError("stein drift with terminal_policy analytic_limit needs a gradient; use last_interior");
      break;
    case DriftMode::exact_gaussian:
      if (d.epsilon > 0.0) throw UsageError("exact_gaussian drift has no epsilon form");
      if (!std::holds_alternative<GaussianParams>(target.family) &&
          !std::holds_alternative<GaussianMixtureParams>(target.family))
        throw UsageError("exact_gaussian drift needs a catalog Gaussian or Gaussian-mixture target");
      break;
    case DriftMode::quadrature:
      if (target.dim > 2) throw UsageError("quadrature drift supports d <= 2 only");
      break;
  }
}

struct Worker {
  const TargetSpec& target;
  const RunConfig& cfg;
  std::shared_ptr<const QuadratureRule> rule;
  DriftWorkspace ws;
  Matrix noise;
  Vector y, b, z;

  Worker(const TargetSpec& tgt, const RunConfig& c) : target(tgt), cfg(c) {
    if (cfg.drift.mode == DriftMode::quadrature) rule = gauss_hermite_rule(cfg.drift.quadrature_order);
    noise.resize(target.dim, cfg.drift.mc_batch);
  }

  // b(t_i, y) for one step; updates the path's flags.
  void drift(int i, NormalSource& est_noise, PathFlags& flags) {
    const DriftConfig& d = cfg.drift;
    const double t = cfg.grid.time(i);
    if (!(t < target.horizon)) throw std::logic_error("drift evaluated at t = T inside the integrator");
    ++flags.drift_evaluations;
    switch (d.mode) {
      case DriftMode::exact_gaussian:
        b = drift_exact(target, t, y);
        if (apply_clamp(b, d.clamp)) ++flags.clamp_events;
        return;
      case DriftMode::quadrature: {
        auto q = gh_expectation(target, t, y, *rule);
        if (q.degenerate) {
          b.setZero(target.dim);
          if (d.epsilon == 0.0) ++flags.degenerate_events;
          return;
        }
        b = q.grad_log_h;
        if (d.epsilon > 0.0) b *= logistic(std::log1p(-d.epsilon) + q.log_h - std::log(d.epsilon));
        if (apply_clamp(b, d.clamp)) ++flags.clamp_events;
        return;
      }
      case DriftMode::gradient_ratio:
      case DriftMode::stein: {
        DriftEstimate est;
        if (d.mode == DriftMode::stein && i == cfg.grid.n - 1 && d.terminal_policy == TerminalPolicy::analytic_limit) {
          est = drift_terminal(target, d, y);
        } else {
          est_noise.fill(noise);
          est = drift_mc(target, d, t, y, noise, ws);
        }
        b = std::move(est.value);
        if (est.degenerate) ++flags.degenerate_events;
        if (est.clamped) ++flags.clamp_events;
        return;
      }
    }
  }

  void run_path(std::int64_t path, Ensemble& out) {
    const int n = cfg.grid.n;
    const double h = cfg.grid.step();
    const double sqrt_h = std::sqrt(h);
    const auto p = static_cast<std::uint64_t>(path);
    NormalSource drive(derive_seed(cfg.master_seed, {p, static_cast<std::uint64_t>(Stream::driving)}));
    NormalSource est(derive_seed(cfg.master_seed, {p, static_cast<std::uint64_t>(Stream::drift_estimation)}));
    PathFlags& flags = out.flags[static_cast<std::size_t>(path)];
    y.setZero(target.dim);
    z.resize(target.dim);
    if (cfg.record_paths) out.paths.row(path).head(target.dim) = y.transpose();
    for (int i = 0; i < n; ++i) {
      drift(i, est, flags);
      drive.fill(z);
      y += b * h + sqrt_h * z;
      if (cfg.record_paths) out.paths.row(path).segment(static_cast<Eigen::Index>(i + 1) * target.dim, target.dim) = y.transpose();
    }
    out.terminal.row(path) = y.transpose();
  }
};

Ensemble run(const TargetSpec& target, const RunConfig& cfg) {
  check_compatible(target, cfg);
  const std::int64_t k = cfg.ensemble_size;
  Ensemble out;
  out.terminal.resize(k, target.dim);
  if (cfg.record_paths) out.paths.resize(k, static_cast<Eigen::Index>(cfg.grid.n + 1) * target.dim);
  out.flags.assign(static_cast<std::size_t>(k), PathFlags{});
  out.target_name = target.name;
  out.epsilon = cfg.drift.epsilon;
  out.config = cfg;

  unsigned threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::int64_t>(threads, k));
  constexpr std::int64_t kChunk = 64;
  std::atomic<std::int64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;

  // Paths are disjoint rows of the output; scheduling cannot affect values.
  auto work = [&] {
    try {
      Worker w(target, cfg);
      for (;;) {
        const std::int64_t begin = next.fetch_add(kChunk);
        if (begin >= k) break;
        const std::int64_t end = std::min(begin + kChunk, k);
        for (std::int64_t p = begin; p < end; ++p) w.run_path(p, out);
      }
    } catch (...) {
      std::lock_guard lock(error_mu);
      if (!error) error = std::current_exception();
      next.store(k);
    }
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace

Ensemble em_run(const TargetSpec& target, const RunConfig& cfg) { return run(target, cfg); }

Ensemble em_run(const EpsilonTarget& target, const RunConfig& cfg) {
  if (cfg.drift.epsilon != 0.0 && cfg.drift.epsilon != target.epsilon)
    throw UsageError("run configuration epsilon differs from the target's epsilon");
  RunConfig c = cfg;
  c.drift.epsilon = target.epsilon;
  return run(target.base, c);
}

std::uint64_t sweep_cell_seed(std::uint64_t master_seed, int n, double epsilon) {
  return derive_seed(master_seed, {static_cast<std::uint64_t>(n), seed_key(epsilon)});
}

std::vector<SweepCell> em_sweep(const TargetSpec& target, const RunConfig& base_cfg, const std::vector<int>& n_values,
                                const std::vector<double>& eps_values, const SweepSink& sink) {
  if (n_values.empty()) throw UsageError("sweep needs at least one n value");
  if (eps_values.empty()) throw UsageError("sweep needs at least one epsilon value");
  std::vector<SweepCell> cells;
  for (int n : n_values) {
    for (double eps : eps_values) {
      RunConfig cfg = base_cfg;
      cfg.grid.n = n;
      cfg.drift.epsilon = 0.0;
      cfg.master_seed = sweep_cell_seed(base_cfg.master_seed, n, eps);
      SweepCell cell{n, eps, em_run(make_epsilon_target(target, eps), cfg)};
      if (sink) sink(cell);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace sfs
