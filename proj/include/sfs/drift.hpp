#pragma once

#include "sfs/target_model.hpp"

#include <optional>

namespace sfs {

/// How b(t, y) = grad log h(t, y) is obtained.
///  - gradient_ratio: Monte Carlo over u = y + sqrt(T-t) z of grad log phi,
///    self-normalized by phi(u).
///  - stein: Monte Carlo, score-free, z phi(u) / sqrt(T-t) over phi(u).
///  - exact_gaussian: closed form for catalog Gaussians and T-variance mixtures.
///  - quadrature: Gauss-Hermite oracle at a fixed order (d <= 2).
enum class DriftMode { gradient_ratio, stein, exact_gaussian, quadrature };

/// What the integrator does on its last step (t = t_{n-1}) in stein mode.
///  - analytic_limit: use the terminal drift grad phi / phi at the current point.
///  - last_interior: evaluate the estimator at t_{n-1} as on every other step.
enum class TerminalPolicy { analytic_limit, last_interior };

struct DriftConfig {
  DriftMode mode = DriftMode::gradient_ratio;
  int mc_batch = 1024;
  double epsilon = 0.0;
  TerminalPolicy terminal_policy = TerminalPolicy::analytic_limit;
  std::optional<double> clamp;  // max drift norm
  int quadrature_order = 64;
};

/// Throws UsageError on an out-of-range field.
void validate(const DriftConfig& cfg);

/// Clamp used when the configuration leaves it unset: none for eps > 0 or
/// certified targets, 1e4 otherwise.
std::optional<double> default_clamp(const TargetSpec& target, double epsilon);

struct DriftEstimate {
  Vector value;
  double log_denominator = kNegInf;  // log of the (eps-mixed) estimate of h
  double ess_fraction = 0.0;         // (sum w)^2 / (M sum w^2)
  bool degenerate = false;           // every phi-weight vanished and eps == 0
  bool clamped = false;
  Vector std_error;                  // delta-method standard error per coordinate (MC modes)
};

/// Scratch buffers for drift_mc; one per worker.
struct DriftWorkspace {
  Matrix points;
  Vector log_phi;
  Eigen::ArrayXd weights;
  Matrix grads;
};

/// Monte Carlo drift at (t, y), 0 <= t < T. `noise` is d x M standard normal.
/// The log-density offset of the target cancels exactly.
DriftEstimate drift_mc(const TargetSpec& target, const DriftConfig& cfg, double t, const Vector& y,
                       const Eigen::Ref<const Matrix>& noise, DriftWorkspace& ws);
DriftEstimate drift_mc(const TargetSpec& target, const DriftConfig& cfg, double t, const Vector& y,
                       const Eigen::Ref<const Matrix>& noise);

/// b(T, y) = grad phi(y)/phi(y), or its eps form
/// (1-eps) grad phi / ((1-eps) phi + eps).
DriftEstimate drift_terminal(const TargetSpec& target, const DriftConfig& cfg, const Vector& y);

/// Closed form for rho = N(m, sigma^2 I):
/// (m - (1 - sigma^2/T) y) / (sigma^2 + (1 - sigma^2/T)(T - t)).
Vector drift_exact_gaussian(const GaussianParams& params, double horizon, double t, const Vector& y);

/// Closed form for sum_k w_k N(m_k, T I): softmax-weighted m_k / T.
Vector drift_exact_mixture(const GaussianMixtureParams& params, double horizon, double t, const Vector& y);

/// Dispatches to the closed form for the target's family; UsageError when
/// there is none.
Vector drift_exact(const TargetSpec& target, double t, const Vector& y);

/// Bound on |b_eps| under the relative-Lipschitz condition with constant c1:
/// c1 (1 - eps)/eps + 2 c1.
double drift_bound_epsilon(double c1, double epsilon);

/// Applies the clamp, if any, in place. Returns true if the value was scaled.
bool apply_clamp(Vector& value, const std::optional<double>& clamp);

}  // namespace sfs
