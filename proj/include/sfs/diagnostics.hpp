#pragma once

#include "sfs/em_integrator.hpp"
#include "sfs/target_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sfs {

// ---------------------------------------------------------------------------
// Distances between empirical distributions.

/// Exact W1 between two 1D empirical distributions. Equal sizes: mean
/// absolute difference of the sorted samples; otherwise the integral of
/// |F_a - F_b|.
double w1_1d(std::vector<double> a, std::vector<double> b);

/// W1 between weighted 1D distributions given as sorted support points with
/// probability masses (each mass vector sums to 1).
double w1_sorted_weighted(const std::vector<double>& xa, const std::vector<double>& pa, const std::vector<double>& xb,
                          const std::vector<double>& pb);

/// 1D: exact W1 of the single column. d > 1: sliced W1, the mean over
/// `directions` seeded random unit directions of the projected W1.
double sliced_w1(const RowMatrix& a, const RowMatrix& b, int directions = 32, std::uint64_t seed = 0);

/// Product binning: one sorted edge list per dimension (d <= 2).
struct Binning {
  std::vector<std::vector<double>> edges;

  std::size_t bin_count() const;
};

/// `bins` equal-width bins per dimension spanning both samples.
Binning uniform_binning(const RowMatrix& a, const RowMatrix& b, int bins);

struct TvResult {
  double value = 0.0;
  std::size_t bins = 0;
};

/// (1/2) sum over bins of |p_a - p_b|: the total-variation distance restricted
/// to the bin algebra, hence a lower bound of the true one. Every sample must
/// fall inside the binning; each sample needs at least 10 points.
TvResult tv_histogram(const RowMatrix& a, const RowMatrix& b, const Binning& binning);
TvResult tv_histogram(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& edges);

struct MomentErrors {
  Vector mean_err;      // componentwise |mean - target mean|
  double cov_err = 0;   // Frobenius norm of covariance difference
};

MomentErrors moment_errors(const RowMatrix& sample, const TargetSpec& target);

// ---------------------------------------------------------------------------
// Condition probes. Both return lower bounds of the true constants.

struct Box {
  Vector lower;
  Vector upper;
};

Box cube(int dim, double lo, double hi);

struct ConditionProbeResult {
  double lipschitz_logphi_est = 0.0;
  double a4_ratio_est = 0.0;
  std::int64_t sample_points = 0;
  std::int64_t excluded_pairs = 0;
  Vector max_attained_at;
};

/// max |log phi(x) - log phi(y)| / |x - y| over random pairs in the box at
/// separations 1e-3, 1e-1, 1 (cycled). Pairs with phi = 0 are excluded and
/// counted. Pair i depends only on (seed, i).
ConditionProbeResult probe_a2(const TargetSpec& target, const Box& region, std::int64_t pairs, std::uint64_t seed);

/// max |phi(x) - phi(y)| / ((1 + phi(x) + phi(y)) |x - y|), log-stabilized.
ConditionProbeResult probe_a4(const TargetSpec& target, const Box& region, std::int64_t pairs, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Trend fitting.

struct SeriesPoint {
  double x = 0.0;
  double metric = 0.0;
  double se = 0.0;
};

struct ConvergenceFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_lo = 0.0;  // 95% confidence interval
  double slope_hi = 0.0;
};

/// OLS of log(metric) on log(x).
ConvergenceFit fit_convergence(const std::vector<SeriesPoint>& series);

// ---------------------------------------------------------------------------
// Reports.

struct MetricsOptions {
  int bins = 50;
  int directions = 32;
  int bootstrap = 200;
  std::uint64_t seed = 0;
};

struct MetricsReport {
  double w1 = 0.0;
  double mc_se = 0.0;
  double tv_hist = 0.0;
  std::size_t tv_bins = 0;
  Vector mean_err;
  double cov_err = 0.0;
  int n = 0;
  double epsilon = 0.0;
  std::int64_t k = 0;
  int m = 0;
  std::int64_t flagged_paths = 0;

  double mean_err_max() const { return mean_err.size() ? mean_err.cwiseAbs().maxCoeff() : 0.0; }
};

/// Bootstrap standard error of sliced_w1(sample, reference), resampling the
/// sample only.
double bootstrap_w1_se(const RowMatrix& sample, const RowMatrix& reference, int replicates, int directions,
                       std::uint64_t seed);

MetricsReport compute_metrics(const Ensemble& ensemble, const RowMatrix& reference, const TargetSpec& target,
                              const MetricsOptions& options);

/// Stable column order: n, epsilon, K, M, w1, mc_se, tv_hist, mean_err_max, cov_err.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& report);
std::string metrics_json(const MetricsReport& report);
std::string probe_json(const ConditionProbeResult& a2, const ConditionProbeResult& a4);

}  // namespace sfs
