#include "sfs/drift.hpp"

#include "sfs/log_space.hpp"

#include <cmath>

namespace sfs {

void validate(const DriftConfig& cfg) {
  if (cfg.mc_batch < 1) throw UsageError("mc_batch must be at least 1");
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon < 1.0)) throw UsageError("epsilon must lie in [0, 1)");
  if (cfg.clamp && !(*cfg.clamp > 0.0)) throw UsageError("clamp must be positive");
  if (cfg.mode == DriftMode::quadrature && cfg.quadrature_order < 1)
    throw UsageError("quadrature_order must be positive");
}

std::optional<double> default_clamp(const TargetSpec& target, double epsilon) {
  if (epsilon > 0.0 || target.a2_certified) return std::nullopt;
  return 1e4;
}

bool apply_clamp(Vector& value, const std::optional<double>& clamp) {
  if (!clamp) return false;
  const double norm = value.norm();
  if (norm <= *clamp) return false;
  value *= *clamp / norm;
  return true;
}

namespace {

constexpr double kLogWeightFloor = -700.0;

void check_inputs(const TargetSpec& target, const DriftConfig& cfg, double t, const Vector& y) {
  validate(cfg);
  if (y.size() != target.dim) throw UsageError("drift: point dimension does not match target");
  if (!(t >= 0.0)) throw UsageError("drift: t must be non-negative");
  if (cfg.epsilon > 0.0 && !target.normalized)
    throw UsageError("drift: epsilon > 0 needs a normalized target");
}

// (1-eps) B / ((1-eps) B + eps) with log B given.
double epsilon_factor(double log_b, double epsilon) {
  if (log_b == kNegInf) return 0.0;
  return logistic(std::log1p(-epsilon) + log_b - std::log(epsilon));
}

}  // namespace

DriftEstimate drift_mc(const TargetSpec& target, const DriftConfig& cfg, double t, const Vector& y,
                       const Eigen::Ref<const Matrix>& noise, DriftWorkspace& ws) {
  check_inputs(target, cfg, t, y);
  if (t >= target.horizon) throw UsageError("drift_mc: t must be < T (use drift_terminal at t = T)");
  if (cfg.mode != DriftMode::gradient_ratio && cfg.mode != DriftMode::stein)
    throw UsageError("drift_mc: mode must be gradient_ratio or stein");
  if (cfg.mode == DriftMode::gradient_ratio && !target.has_gradient())
    throw UsageError("drift_mc: gradient_ratio mode needs grad_log_rho on '" + target.name + "'");
  if (noise.rows() != target.dim || noise.cols() != cfg.mc_batch)
    throw UsageError("drift_mc: noise must be d x mc_batch");

  const Eigen::Index m = noise.cols();
  const double s = std::sqrt(target.horizon - t);
  ws.points.resize(target.dim, m);
  ws.log_phi.resize(m);
  for (Eigen::Index k = 0; k < target.dim; ++k)
    with_row(noise, k, [&](const auto& z) { ws.points.row(k) = (s * z + y[k]).transpose().matrix(); });
  log_phi_batch(target, ws.points, ws.log_phi, /*include_offset=*/false);

  DriftEstimate est;
  est.value = Vector::Zero(target.dim);
  est.std_error = Vector::Zero(target.dim);
  const double l_max = ws.log_phi.maxCoeff();

  if (l_max == kNegInf) {
    est.degenerate = (cfg.epsilon == 0.0);
    est.log_denominator = cfg.epsilon > 0.0 ? std::log(cfg.epsilon) : kNegInf;
    return est;
  }

  // Relative weights below exp(-700) are set to 0 rather than left subnormal.
  ws.weights = (ws.log_phi.array() - l_max).max(kLogWeightFloor).exp();
  ws.weights = (ws.log_phi.array() - l_max < kLogWeightFloor).select(0.0, ws.weights);
  const double sum_w = ws.weights.sum();
  const double sum_w2 = ws.weights.square().sum();
  est.ess_fraction = sum_w * sum_w / (static_cast<double>(m) * sum_w2);

  // Per-sample contributions c_j; value = sum w_j c_j / sum w_j.
  if (cfg.mode == DriftMode::gradient_ratio) {
    ws.grads.resize(target.dim, m);
    grad_log_phi_batch(target, ws.points, ws.grads);
    // w_j * g_j with w_j == 0 contributes nothing even where g_j is not finite.
    for (Eigen::Index k = 0; k < target.dim; ++k) {
      with_row(ws.grads, k, [&](const auto& g) {
        est.value[k] = (ws.weights > 0.0).select(ws.weights * g, 0.0).sum() / sum_w;
        est.std_error[k] =
            std::sqrt((ws.weights > 0.0).select((ws.weights * (g - est.value[k])).square(), 0.0).sum()) / sum_w;
      });
    }
  } else {
    const double inv_s = 1.0 / s;
    for (Eigen::Index k = 0; k < target.dim; ++k) {
      with_row(noise, k, [&](const auto& z) {
        est.value[k] = inv_s * (ws.weights * z).sum() / sum_w;
        est.std_error[k] = std::sqrt((ws.weights * (inv_s * z - est.value[k])).square().sum()) / sum_w;
      });
    }
  }

  // log of the sample mean of phi, offset included.
  const double log_b = l_max + std::log(sum_w / static_cast<double>(m)) + target.log_offset;
  est.log_denominator = log_b;
  if (cfg.epsilon > 0.0) {
    const double f = epsilon_factor(log_b, cfg.epsilon);
    est.value *= f;
    est.std_error *= f;
    est.log_denominator = log_add_exp(std::log1p(-cfg.epsilon) + log_b, std::log(cfg.epsilon));
  }
  est.clamped = apply_clamp(est.value, cfg.clamp);
  return est;
}

DriftEstimate drift_mc(const TargetSpec& target, const DriftConfig& cfg, double t, const Vector& y,
                       const Eigen::Ref<const Matrix>& noise) {
  DriftWorkspace ws;
  return drift_mc(target, cfg, t, y, noise, ws);
}

DriftEstimate drift_terminal(const TargetSpec& target, const DriftConfig& cfg, const Vector& y) {
  check_inputs(target, cfg, target.horizon, y);
  if (cfg.terminal_policy != TerminalPolicy::analytic_limit)
    throw UsageError("drift_terminal: requires terminal_policy = analytic_limit");
  if (!target.has_gradient())
    throw UsageError("drift_terminal: target '" + target.name + "' has no gradient; b(T, .) is undefined");

  DriftEstimate est;
  est.value = Vector::Zero(target.dim);
  est.std_error = Vector::Zero(target.dim);
  est.ess_fraction = 1.0;
  const double l = log_phi(target, y);
  if (l == kNegInf) {
    est.degenerate = (cfg.epsilon == 0.0);
    est.ess_fraction = 0.0;
    est.log_denominator = cfg.epsilon > 0.0 ? std::log(cfg.epsilon) : kNegInf;
    return est;
  }
  est.value = grad_log_phi(target, y);
  est.log_denominator = l;
  if (cfg.epsilon > 0.0) {
    est.value *= epsilon_factor(l, cfg.epsilon);
    est.log_denominator = mix_log_phi(l, cfg.epsilon);
  }
  est.clamped = apply_clamp(est.value, cfg.clamp);
  return est;
}

Vector drift_exact_gaussian(const GaussianParams& params, double horizon, double t, const Vector& y) {
  if (!(t >= 0.0 && t <= horizon)) throw UsageError("drift_exact_gaussian: t must lie in [0, T]");
  if (y.size() != params.mean.size()) throw UsageError("drift_exact_gaussian: dimension mismatch");
  const double s2 = params.variance;
  const double a = 1.0 - s2 / horizon;
  return (params.mean - a * y) / (s2 + a * (horizon - t));
}

Vector drift_exact_mixture(const GaussianMixtureParams& params, double horizon, double t, const Vector& y) {
  if (!(t >= 0.0 && t <= horizon)) throw UsageError("drift_exact_mixture: t must lie in [0, T]");
  // E[exp(a.(y + sZ))] = exp(a.y + |a|^2 s^2 / 2) with a = m/T, s^2 = T - t.
  const auto k = static_cast<Eigen::Index>(params.components.size());
  Vector e(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& c = params.components[static_cast<std::size_t>(i)];
    if (c.mean.size() != y.size()) throw UsageError("drift_exact_mixture: dimension mismatch");
    const double mm = c.mean.squaredNorm();
    e[i] = std::log(c.weight) + c.mean.dot(y) / horizon - mm / (2.0 * horizon) +
           mm * (horizon - t) / (2.0 * horizon * horizon);
  }
  const Vector resp = (e.array() - log_sum_exp(e)).exp().matrix();
  Vector b = Vector::Zero(y.size());
  for (Eigen::Index i = 0; i < k; ++i) b += resp[i] * params.components[static_cast<std::size_t>(i)].mean;
  return b / horizon;
}

Vector drift_exact(const TargetSpec& target, double t, const Vector& y) {
  if (const auto* g = std::get_if<GaussianParams>(&target.family)) return drift_exact_gaussian(*g, target.horizon, t, y);
  if (const auto* m = std::get_if<GaussianMixtureParams>(&target.family))
    return drift_exact_mixture(*m, target.horizon, t, y);
  throw UsageError("no closed-form drift for target '" + target.name + "'");
}

double drift_bound_epsilon(double c1, double epsilon) {
  if (!(c1 > 0.0)) throw UsageError("drift_bound_epsilon: C1 must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw UsageError("drift_bound_epsilon: epsilon must lie in (0, 1)");
  return c1 * (1.0 - epsilon) / epsilon + 2.0 * c1;
}

}  // namespace sfs
