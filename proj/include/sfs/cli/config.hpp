#pragma once

#include "sfs/diagnostics.hpp"
#include "sfs/drift.hpp"
#include "sfs/em_integrator.hpp"
#include "sfs/target_model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sfs::cli {

/// Configuration error; `line` is 1-based, 0 when unknown.
class ConfigError : public UsageError {
 public:
  ConfigError(const std::string& message, int line);

  int line() const { return line_; }

 private:
  int line_;
};

struct TargetBlock {
  std::string name;  // gaussian | standard | mixture | triangular_kde
  int dim = 1;
  Vector mean;
  double variance = 1.0;
  std::vector<MixtureComponent> components;
  std::vector<double> centers;
  double bandwidth = 1.0;
  std::vector<double> epsilon{0.0};
  double log_offset = 0.0;
};

struct GridBlock {
  double horizon = 1.0;
  std::vector<int> n{16};
};

struct RunBlock {
  std::int64_t k = 1000;
  std::uint64_t master_seed = 0;
  std::string out = "out";
  std::string format = "csv";
  int threads = 0;
};

struct MetricsBlock {
  std::int64_t reference_size = 0;  // 0: no metrics
  int bins = 50;
  int directions = 32;
  int bootstrap = 200;
};

struct OracleBlock {
  double t_min = 0.0;
  double t_max = 0.9;
  int t_points = 10;
  double y_min = -2.0;
  double y_max = 2.0;
  int y_points = 10;
  int m = 4096;
  int seeds = 1;
  double sd_gate = 5.0;
  double kink_tolerance = 1e-4;
};

struct ProbeBlock {
  double lower = -3.0;
  double upper = 3.0;
  std::int64_t pairs = 100000;
};

struct ExperimentConfig {
  TargetBlock target;
  GridBlock grid;
  DriftConfig drift;
  bool clamp_set = false;  // drift.clamp came from the file (possibly "none")
  RunBlock run;
  MetricsBlock metrics;
  OracleBlock oracle;
  ProbeBlock probe;
};

/// Parses a YAML config, or a provenance JSON written by the tool (its
/// "config" member is used). Throws ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// The config as JSON, in a form parse_config accepts back.
std::string config_json(const ExperimentConfig& cfg);

TargetSpec build_target(const ExperimentConfig& cfg);

/// RunConfig for one (n, eps) cell; the clamp default is resolved here.
RunConfig build_run_config(const ExperimentConfig& cfg, const TargetSpec& target, int n, double epsilon);

MetricsOptions build_metrics_options(const ExperimentConfig& cfg);

}  // namespace sfs::cli
