#pragma once

#include "sfs/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace sfs {

enum class Support { full, compact };

struct GaussianParams {
  Vector mean;
  double variance = 1.0;  // isotropic sigma^2
};

struct MixtureComponent {
  double weight = 1.0;
  Vector mean;
};

/// Gaussian mixture whose components all have covariance T*I.
struct GaussianMixtureParams {
  std::vector<MixtureComponent> components;
};

struct TriangularKdeParams {
  std::vector<double> centers;
  double bandwidth = 1.0;
};

struct AnalyticMoments {
  Vector mean;
  Matrix covariance;
};

/// Pointwise log-density, possibly unnormalized. Returns -inf outside the
/// support and is never +inf or NaN on finite input.
using LogDensityFn = std::function<double(const Vector&)>;
using GradientFn = std::function<Vector(const Vector&)>;
/// Batched forms; `points` is d x M (one point per column).
using LogDensityBatchFn = std::function<void(const Eigen::Ref<const Matrix>& points, Eigen::Ref<Vector> out)>;
using GradientBatchFn = std::function<void(const Eigen::Ref<const Matrix>& points, Eigen::Ref<Matrix> out)>;

/// A target distribution rho on R^d together with the horizon T of the bridge.
///
/// `log_rho` is the shape of the log-density; `log_offset` is an additive
/// constant carried separately so that the drift, which only sees ratios of
/// phi, can cancel it exactly. The reported log-density is
/// log_rho(y) + log_offset.
struct TargetSpec {
  int dim = 1;
  double horizon = 1.0;
  std::string name;
  LogDensityFn log_rho;
  GradientFn grad_log_rho;                 // optional
  LogDensityBatchFn log_rho_batch;         // optional, falls back to log_rho
  GradientBatchFn grad_log_rho_batch;      // optional, falls back to grad_log_rho
  double log_offset = 0.0;
  bool normalized = true;
  Support support = Support::full;

  // Catalog metadata.
  std::variant<std::monostate, GaussianParams, GaussianMixtureParams, TriangularKdeParams> family;
  std::optional<AnalyticMoments> moments;
  bool a2_certified = false;                    // log phi globally Lipschitz
  std::optional<double> lipschitz_log_phi;      // certified C0 when a2_certified

  bool has_gradient() const { return static_cast<bool>(grad_log_rho) || static_cast<bool>(grad_log_rho_batch); }
};

/// rho_eps = (1 - eps) rho + eps G_T, so phi_eps = (1 - eps) phi + eps.
struct EpsilonTarget {
  TargetSpec base;
  double epsilon = 0.0;
};

/// Validates epsilon in [0, 1) and that `base` is normalized.
EpsilonTarget make_epsilon_target(TargetSpec base, double epsilon);

/// Same target, density multiplied by exp(shift). Marks it unnormalized when
/// shift != 0.
TargetSpec with_log_offset(TargetSpec target, double shift);

// ---------------------------------------------------------------------------
// phi = rho / G_T in log space.

/// log G_T(y) = -|y|^2/(2T) - (d/2) log(2 pi T).
double log_heat_kernel(int dim, double horizon, const Vector& y);

/// log rho(y) + log_offset.
double log_density(const TargetSpec& target, const Vector& y);

/// log phi(y) = log rho(y) + |y|^2/(2T) + (d/2) log(2 pi T) + log_offset.
/// -inf where rho vanishes.
double log_phi(const TargetSpec& target, const Vector& y);

/// grad log phi(y) = grad log rho(y) + y/T. Requires a gradient.
Vector grad_log_phi(const TargetSpec& target, const Vector& y);

/// log phi at every column of `points` (d x M). The offset is added only when
/// `include_offset` is set; ratio-based consumers leave it out so that the
/// constant cancels bit-exactly.
void log_phi_batch(const TargetSpec& target, const Eigen::Ref<const Matrix>& points, Eigen::Ref<Vector> out,
                   bool include_offset = true);

/// grad log phi at every column of `points`.
void grad_log_phi_batch(const TargetSpec& target, const Eigen::Ref<const Matrix>& points, Eigen::Ref<Matrix> out);

/// log((1 - eps) phi(y) + eps). Finite for eps > 0; equals log_phi at eps = 0.
double log_phi_epsilon(const EpsilonTarget& target, const Vector& y);

/// log rho_eps(y).
double log_density_epsilon(const EpsilonTarget& target, const Vector& y);

/// log((1 - eps) exp(l) + eps) for a given l = log phi, eps in (0, 1).
double mix_log_phi(double log_phi_value, double epsilon);

/// Excess potential V(x) - |x|^2/(2T) with V = -log rho. A target satisfies
/// the Lipschitz condition on log phi whenever this is globally Lipschitz.
double excess_potential(const TargetSpec& target, const Vector& x);

// ---------------------------------------------------------------------------
// Catalog.

/// Normalized isotropic Gaussian N(m, sigma^2 I) with exact gradient.
TargetSpec make_gaussian_target(const GaussianParams& params, double horizon);

/// phi == 1: the target is G_T itself.
TargetSpec make_standard_target(int dim, double horizon);

/// Mixture sum_k w_k N(m_k, T I). log phi is a log-sum-exp of affine
/// functions, Lipschitz with constant max_k |m_k| / T.
TargetSpec make_gaussian_mixture_target(const std::vector<MixtureComponent>& components, double horizon);

/// 1D kernel density estimate with triangular kernel
/// rho(x) = 1/(m h) sum_j (1 - |x - x_j|/h)_+.
TargetSpec make_triangular_kde_target(const TriangularKdeParams& params, double horizon);

/// Draws `count` exact samples (count x d) from a catalog target.
RowMatrix sample_reference(const TargetSpec& target, std::int64_t count, std::uint64_t seed);

/// Triangular KDE density at x (not in log space; test and reference use).
double triangular_kde_density(const TriangularKdeParams& params, double x);

}  // namespace sfs
