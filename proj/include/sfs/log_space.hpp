#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

// Log-space helpers. All of them treat -inf as log(0) and never return NaN
// for inputs in [-inf, +inf).

namespace sfs {

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() == 0) return -std::numeric_limits<Scalar>::infinity();
  const Scalar m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.derived().array() - m).exp().sum());
}

template <typename Derived>
typename Derived::Scalar log_mean_exp(const Eigen::DenseBase<Derived>& x) {
  return log_sum_exp(x) - std::log(static_cast<typename Derived::Scalar>(x.size()));
}

template <typename Scalar>
Scalar log_add_exp(Scalar a, Scalar b) {
  const Scalar hi = std::max(a, b);
  if (hi == -std::numeric_limits<Scalar>::infinity()) return hi;
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log(exp(hi) - exp(lo)) for hi >= lo.
template <typename Scalar>
Scalar log_diff_exp(Scalar hi, Scalar lo) {
  if (lo == -std::numeric_limits<Scalar>::infinity()) return hi;
  const Scalar d = lo - hi;
  // log1p(-exp(d)) loses accuracy for d near 0; switch to log(-expm1(d)).
  return hi + (d > -0.6931471805599453 ? std::log(-std::expm1(d)) : std::log1p(-std::exp(d)));
}

// 1 / (1 + exp(-x)), stable for large |x|.
template <typename Scalar>
Scalar logistic(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace sfs
