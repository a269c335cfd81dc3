#pragma once

#include "sfs/drift.hpp"
#include "sfs/target_model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sfs {

/// Uniform grid t_i = i T / n, i = 0..n.
struct TimeGrid {
  int n = 1;
  double horizon = 1.0;

  double step() const { return horizon / n; }
  double time(int i) const { return i == n ? horizon : (i * horizon) / n; }
};

struct RunConfig {
  TimeGrid grid;
  std::int64_t ensemble_size = 1;
  std::uint64_t master_seed = 0;
  DriftConfig drift;
  bool record_paths = false;
  int threads = 0;  // 0: hardware concurrency. Never changes results.
};

void validate(const RunConfig& cfg);

struct PathFlags {
  std::int64_t drift_evaluations = 0;
  std::int64_t degenerate_events = 0;
  std::int64_t clamp_events = 0;

  bool flagged() const { return degenerate_events > 0 || clamp_events > 0; }
};

struct Ensemble {
  RowMatrix terminal;        // K x d
  RowMatrix paths;           // K x (n+1)d when record_paths, else empty
  std::vector<PathFlags> flags;
  std::string target_name;
  double epsilon = 0.0;
  RunConfig config;

  std::int64_t size() const { return terminal.rows(); }
  int dim() const { return static_cast<int>(terminal.cols()); }
  std::int64_t flagged_paths() const;
  std::int64_t total_clamp_events() const;
  std::int64_t total_degenerate_events() const;
};

/// Euler-Maruyama for the bridge SDE from Y_0 = 0:
///   Y_{i+1} = Y_i + b(t_i, Y_i) h + sqrt(h) Z_{i+1},  i = 0..n-1.
/// Each path draws its driving noise and its drift-estimation noise from two
/// independent streams keyed by (master_seed, path index), so the output is a
/// function of the seed alone. `cfg.drift.epsilon` selects b_eps.
Ensemble em_run(const TargetSpec& target, const RunConfig& cfg);
Ensemble em_run(const EpsilonTarget& target, const RunConfig& cfg);

/// Seed used by em_sweep for the (n, eps) cell.
std::uint64_t sweep_cell_seed(std::uint64_t master_seed, int n, double epsilon);

struct SweepCell {
  int n = 0;
  double epsilon = 0.0;
  Ensemble ensemble;
};

using SweepSink = std::function<void(const SweepCell&)>;

/// em_run over the cross product n_values x eps_values, each cell with its
/// own derived seed. Cells are passed to `sink` (if set) as they complete.
std::vector<SweepCell> em_sweep(const TargetSpec& target, const RunConfig& base_cfg, const std::vector<int>& n_values,
                                const std::vector<double>& eps_values, const SweepSink& sink = {});

}  // namespace sfs
