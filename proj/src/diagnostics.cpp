#include "sfs/diagnostics.hpp"

#include "sfs/log_space.hpp"
#include "sfs/rng.hpp"
#include "sfs/sample_io.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace sfs {

double w1_sorted_weighted(const std::vector<double>& xa, const std::vector<double>& pa, const std::vector<double>& xb,
                          const std::vector<double>& pb) {
  if (xa.empty() || xb.empty()) throw UsageError("w1: empty sample");
  const std::size_t na = xa.size(), nb = xb.size();
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, total = 0.0;
  double x_prev = std::min(xa.front(), xb.front());
  while (i < na || j < nb) {
    const double x = (j >= nb || (i < na && xa[i] <= xb[j])) ? xa[i] : xb[j];
    total += std::abs(fa - fb) * (x - x_prev);
    x_prev = x;
    while (i < na && xa[i] == x) fa += pa[i++];
    while (j < nb && xb[j] == x) fb += pb[j++];
  }
  return total;
}

double w1_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw UsageError("w1_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  const std::vector<double> pa(a.size(), 1.0 / static_cast<double>(a.size()));
  const std::vector<double> pb(b.size(), 1.0 / static_cast<double>(b.size()));
  return w1_sorted_weighted(a, pa, b, pb);
}

namespace {

std::vector<double> column(const RowMatrix& m, Eigen::Index k) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m(i, k);
  return v;
}

Matrix random_directions(int dim, int count, std::uint64_t seed) {
  NormalSource normal(derive_seed(seed, {static_cast<std::uint64_t>(Stream::directions)}));
  Matrix dirs(dim, count);
  normal.fill(dirs);
  dirs.colwise().normalize();
  return dirs;
}

std::vector<double> project(const RowMatrix& m, const Vector& dir) {
  const Vector p = m * dir;
  return {p.data(), p.data() + p.size()};
}

}  // namespace

double sliced_w1(const RowMatrix& a, const RowMatrix& b, int directions, std::uint64_t seed) {
  if (a.cols() != b.cols()) throw UsageError("sliced_w1: dimension mismatch");
  if (a.rows() == 0 || b.rows() == 0) throw UsageError("sliced_w1: empty sample");
  if (a.cols() == 1) return w1_1d(column(a, 0), column(b, 0));
  if (directions < 1) throw UsageError("sliced_w1: need at least one direction");
  const Matrix dirs = random_directions(static_cast<int>(a.cols()), directions, seed);
  double s = 0.0;
  for (int k = 0; k < directions; ++k) s += w1_1d(project(a, dirs.col(k)), project(b, dirs.col(k)));
  return s / directions;
}

double bootstrap_w1_se(const RowMatrix& sample, const RowMatrix& reference, int replicates, int directions,
                       std::uint64_t seed) {
  if (replicates < 2) throw UsageError("bootstrap needs at least 2 replicates");
  if (sample.cols() != reference.cols()) throw UsageError("bootstrap: dimension mismatch");
  const int d = static_cast<int>(sample.cols());
  const Matrix dirs = d == 1 ? Matrix::Ones(1, 1) : random_directions(d, directions, seed);
  const auto k = static_cast<std::size_t>(sample.rows());

  // Sorted projections, with the permutation back to sample indices.
  struct Slice {
    std::vector<double> xs, ref;
    std::vector<std::size_t> order;
  };
  std::vector<Slice> slices(static_cast<std::size_t>(dirs.cols()));
  for (Eigen::Index c = 0; c < dirs.cols(); ++c) {
    Slice& s = slices[static_cast<std::size_t>(c)];
    const std::vector<double> proj = project(sample, dirs.col(c));
    s.order.resize(k);
    std::iota(s.order.begin(), s.order.end(), 0);
    std::sort(s.order.begin(), s.order.end(), [&](std::size_t x, std::size_t y) { return proj[x] < proj[y]; });
    s.xs.resize(k);
    for (std::size_t i = 0; i < k; ++i) s.xs[i] = proj[s.order[i]];
    s.ref = project(reference, dirs.col(c));
    std::sort(s.ref.begin(), s.ref.end());
  }
  const std::vector<double> p_ref(static_cast<std::size_t>(reference.rows()), 1.0 / static_cast<double>(reference.rows()));

  std::vector<double> stats(static_cast<std::size_t>(replicates));
  std::vector<double> counts(k), masses(k);
  for (int r = 0; r < replicates; ++r) {
    Engine eng(derive_seed(seed, {static_cast<std::uint64_t>(Stream::bootstrap), static_cast<std::uint64_t>(r)}));
    boost::random::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::fill(counts.begin(), counts.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i) counts[pick(eng)] += 1.0;
    double acc = 0.0;
    for (const Slice& s : slices) {
      for (std::size_t i = 0; i < k; ++i) masses[i] = counts[s.order[i]] / static_cast<double>(k);
      acc += w1_sorted_weighted(s.xs, masses, s.ref, p_ref);
    }
    stats[static_cast<std::size_t>(r)] = acc / static_cast<double>(slices.size());
  }
  const double mean = std::accumulate(stats.begin(), stats.end(), 0.0) / replicates;
  double var = 0.0;
  for (double v : stats) var += (v - mean) * (v - mean);
  return std::sqrt(var / (replicates - 1));
}

// ---------------------------------------------------------------------------

std::size_t Binning::bin_count() const {
  std::size_t c = 1;
  for (const auto& e : edges) c *= e.size() - 1;
  return c;
}

Binning uniform_binning(const RowMatrix& a, const RowMatrix& b, int bins) {
  if (bins < 1) throw UsageError("binning needs at least one bin");
  if (a.cols() != b.cols()) throw UsageError("binning: dimension mismatch");
  const Eigen::Index d = std::min<Eigen::Index>(a.cols(), 2);
  Binning out;
  for (Eigen::Index k = 0; k < d; ++k) {
    double lo = std::min(a.col(k).minCoeff(), b.col(k).minCoeff());
    double hi = std::max(a.col(k).maxCoeff(), b.col(k).maxCoeff());
    if (hi == lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    std::vector<double> e(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) e[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
    e.back() = hi;
    out.edges.push_back(std::move(e));
  }
  return out;
}

namespace {

std::size_t bin_index(const std::vector<double>& edges, double x) {
  if (!(x >= edges.front() && x <= edges.back())) throw UsageError("tv_histogram: sample falls outside the binning");
  if (x == edges.back()) return edges.size() - 2;
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin()) - 1;
}

}  // namespace

TvResult tv_histogram(const RowMatrix& a, const RowMatrix& b, const Binning& binning) {
  if (a.rows() < 10 || b.rows() < 10) throw UsageError("tv_histogram: need at least 10 samples per distribution");
  if (a.cols() != b.cols()) throw UsageError("tv_histogram: dimension mismatch");
  const std::size_t d = binning.edges.size();
  if (d < 1 || d > 2) throw UsageError("tv_histogram: binning must cover 1 or 2 dimensions");
  if (static_cast<std::size_t>(a.cols()) < d) throw UsageError("tv_histogram: binning has more dimensions than the data");
  for (const auto& e : binning.edges)
    if (e.size() < 2 || !std::is_sorted(e.begin(), e.end())) throw UsageError("tv_histogram: edges must be sorted");

  const std::size_t nb = binning.bin_count();
  std::vector<double> pa(nb, 0.0), pb(nb, 0.0);
  auto accumulate = [&](const RowMatrix& s, std::vector<double>& p) {
    const double w = 1.0 / static_cast<double>(s.rows());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      std::size_t idx = bin_index(binning.edges[0], s(i, 0));
      if (d == 2) idx = idx * (binning.edges[1].size() - 1) + bin_index(binning.edges[1], s(i, 1));
      p[idx] += w;
    }
  };
  accumulate(a, pa);
  accumulate(b, pb);
  double tv = 0.0;
  for (std::size_t i = 0; i < nb; ++i) tv += std::abs(pa[i] - pb[i]);
  return {std::clamp(0.5 * tv, 0.0, 1.0), nb};
}

TvResult tv_histogram(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& edges) {
  const RowMatrix ma = Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
  const RowMatrix mb = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
  return tv_histogram(ma, mb, Binning{{edges}});
}

MomentErrors moment_errors(const RowMatrix& sample, const TargetSpec& target) {
  if (!target.moments) throw UsageError("moment_errors: target '" + target.name + "' has no analytic moments");
  if (sample.cols() != target.dim) throw UsageError("moment_errors: dimension mismatch");
  if (sample.rows() < 2) throw UsageError("moment_errors: need at least 2 samples");
  const Vector mean = sample.colwise().mean().transpose();
  const Matrix centered = sample.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(sample.rows() - 1);
  return {(mean - target.moments->mean).cwiseAbs(), (cov - target.moments->covariance).norm()};
}

// ---------------------------------------------------------------------------

Box cube(int dim, double lo, double hi) {
  if (!(hi > lo)) throw UsageError("box: upper bound must exceed lower bound");
  return {Vector::Constant(dim, lo), Vector::Constant(dim, hi)};
}

namespace {

template <typename Ratio>
ConditionProbeResult probe(const TargetSpec& target, const Box& region, std::int64_t pairs, std::uint64_t seed,
                           Ratio ratio) {
  if (pairs < 1000) throw UsageError("condition probes need at least 1000 pairs");
  if (region.lower.size() != target.dim || region.upper.size() != target.dim)
    throw UsageError("probe region dimension does not match the target");
  if (!((region.upper - region.lower).array() > 0.0).all()) throw UsageError("probe region is empty");
  constexpr double kScales[3] = {1e-3, 1e-1, 1.0};
  NormalSource normal(derive_seed(seed, {static_cast<std::uint64_t>(Stream::probe)}));
  boost::random::uniform_01<double> unif;
  const int d = target.dim;

  ConditionProbeResult out;
  out.max_attained_at = Vector::Zero(d);
  Vector x(d), dir(d);
  for (std::int64_t i = 0; i < pairs; ++i) {
    for (int k = 0; k < d; ++k) x[k] = region.lower[k] + (region.upper[k] - region.lower[k]) * unif(normal.engine());
    const double scale = kScales[i % 3];
    // The partner is projected back into the box; dist is the actual separation.
    Vector y;
    double dist = 0.0;
    do {
      normal.fill(dir);
      if (dir.norm() == 0.0) continue;
      y = (x + scale * dir.normalized()).cwiseMax(region.lower).cwiseMin(region.upper);
      dist = (x - y).norm();
    } while (dist == 0.0);
    const double lx = log_phi(target, x), ly = log_phi(target, y);
    const auto r = ratio(lx, ly, dist);
    ++out.sample_points;
    // The running max goes into lipschitz_logphi_est; probe_a4 moves it.
    if (!r) {
      ++out.excluded_pairs;
      continue;
    }
    if (*r > out.lipschitz_logphi_est) {
      out.lipschitz_logphi_est = *r;
      out.max_attained_at = x;
    }
  }
  return out;
}

}  // namespace

ConditionProbeResult probe_a2(const TargetSpec& target, const Box& region, std::int64_t pairs, std::uint64_t seed) {
  return probe(target, region, pairs, seed, [](double lx, double ly, double dist) -> std::optional<double> {
    if (lx == kNegInf || ly == kNegInf) return std::nullopt;
    return std::abs(lx - ly) / dist;
  });
}

ConditionProbeResult probe_a4(const TargetSpec& target, const Box& region, std::int64_t pairs, std::uint64_t seed) {
  auto out = probe(target, region, pairs, seed, [](double lx, double ly, double dist) -> std::optional<double> {
    const double hi = std::max(lx, ly), lo = std::min(lx, ly);
    if (hi == kNegInf) return 0.0;
    const double log_num = log_diff_exp(hi, lo);
    const double log_den = log_add_exp(log_add_exp(0.0, lx), ly);
    return std::exp(log_num - log_den) / dist;
  });
  out.a4_ratio_est = out.lipschitz_logphi_est;
  out.lipschitz_logphi_est = 0.0;
  return out;
}

// ---------------------------------------------------------------------------

ConvergenceFit fit_convergence(const std::vector<SeriesPoint>& series) {
  if (series.size() < 3) throw UsageError("fit_convergence: need at least 3 points");
  const auto n = static_cast<double>(series.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : series) {
    if (!(p.metric > 0.0) || !(p.x > 0.0)) throw UsageError("fit_convergence: x and metric must be positive");
    mx += std::log(p.x);
    my += std::log(p.metric);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : series) {
    const double dx = std::log(p.x) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(p.metric) - my);
  }
  if (sxx == 0.0) throw UsageError("fit_convergence: x values must not all coincide");
  ConvergenceFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (const auto& p : series) {
    const double r = std::log(p.metric) - (fit.intercept + fit.slope * std::log(p.x));
    ssr += r * r;
  }
  const double se = std::sqrt(ssr / (n - 2.0) / sxx);
  const double q = boost::math::quantile(boost::math::students_t(n - 2.0), 0.975);
  fit.slope_lo = fit.slope - q * se;
  fit.slope_hi = fit.slope + q * se;
  return fit;
}

// ---------------------------------------------------------------------------

MetricsReport compute_metrics(const Ensemble& ensemble, const RowMatrix& reference, const TargetSpec& target,
                              const MetricsOptions& options) {
  MetricsReport r;
  r.w1 = sliced_w1(ensemble.terminal, reference, options.directions, options.seed);
  r.mc_se = bootstrap_w1_se(ensemble.terminal, reference, options.bootstrap, options.directions, options.seed);
  const TvResult tv = tv_histogram(ensemble.terminal, reference, uniform_binning(ensemble.terminal, reference, options.bins));
  r.tv_hist = tv.value;
  r.tv_bins = tv.bins;
  if (target.moments) {
    const MomentErrors me = moment_errors(ensemble.terminal, target);
    r.mean_err = me.mean_err;
    r.cov_err = me.cov_err;
  }
  r.n = ensemble.config.grid.n;
  r.epsilon = ensemble.epsilon;
  r.k = ensemble.size();
  r.m = ensemble.config.drift.mc_batch;
  r.flagged_paths = ensemble.flagged_paths();
  return r;
}

std::string metrics_csv_header() { return "n,epsilon,K,M,w1,mc_se,tv_hist,mean_err_max,cov_err"; }

std::string metrics_csv_row(const MetricsReport& r) {
  return std::to_string(r.n) + "," + format_double(r.epsilon) + "," + std::to_string(r.k) + "," + std::to_string(r.m) +
         "," + format_double(r.w1) + "," + format_double(r.mc_se) + "," + format_double(r.tv_hist) + "," +
         format_double(r.mean_err_max()) + "," + format_double(r.cov_err);
}

std::string metrics_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["epsilon"] = r.epsilon;
  j["K"] = r.k;
  j["M"] = r.m;
  j["w1"] = r.w1;
  j["mc_se"] = r.mc_se;
  j["tv_hist"] = r.tv_hist;
  j["tv_bins"] = r.tv_bins;
  j["mean_err"] = std::vector<double>(r.mean_err.data(), r.mean_err.data() + r.mean_err.size());
  j["mean_err_max"] = r.mean_err_max();
  j["cov_err"] = r.cov_err;
  j["flagged_paths"] = r.flagged_paths;
  return j.dump(2);
}

std::string probe_json(const ConditionProbeResult& a2, const ConditionProbeResult& a4) {
  auto one = [](const ConditionProbeResult& p, double est) {
    nlohmann::ordered_json j;
    j["estimate"] = est;
    j["sample_points"] = p.sample_points;
    j["excluded_pairs"] = p.excluded_pairs;
    j["max_attained_at"] = std::vector<double>(p.max_attained_at.data(), p.max_attained_at.data() + p.max_attained_at.size());
    return j;
  };
  nlohmann::ordered_json j;
  j["lipschitz_logphi_est"] = a2.lipschitz_logphi_est;
  j["a4_ratio_est"] = a4.a4_ratio_est;
  j["a2"] = one(a2, a2.lipschitz_logphi_est);
  j["a4"] = one(a4, a4.a4_ratio_est);
  return j.dump(2);
}

}  // namespace sfs
