#pragma once

#include "sfs/target_model.hpp"

#include <memory>

namespace sfs {

/// Gauss-Hermite rule for the standard normal measure (probabilists'
/// weighting): E[f(Z)] ~= sum_i w_i f(x_i), sum_i w_i = 1.
struct QuadratureRule {
  Vector nodes;
  Vector weights;
  Vector log_weights;  // finite even where `weights` underflows
  int order = 0;
};

/// Builds (and caches) the rule of the given order. Thread-safe; the returned
/// rule is immutable.
std::shared_ptr<const QuadratureRule> gauss_hermite_rule(int order);

struct QuadratureExpectation {
  double log_h = kNegInf;
  Vector grad_log_h;
  bool degenerate = false;  // every node evaluated to phi = 0
};

/// log h(t, y) = log E[phi(y + sqrt(T-t) Z)] and its gradient (ratio form),
/// d in {1, 2} (tensor rule in 2D).
QuadratureExpectation gh_expectation(const TargetSpec& target, double t, const Vector& y, const QuadratureRule& rule);

struct QuadratureDrift {
  Vector value;
  double log_h = kNegInf;
  int order = 0;           // order of the returned value
  bool converged = false;  // two successive orders agreed to 1e-9
  bool degenerate = false;
};

/// grad log h(t, y), doubling the order from `order` until two successive
/// values differ by less than `tolerance` or the order reaches `max_order`.
/// The one-dimensional triangular KDE is integrated piecewise between its
/// kinks instead (adaptive Gauss-Kronrod); `order` then counts evaluations.
QuadratureDrift quadrature_drift(const TargetSpec& target, double t, const Vector& y, int order = 64,
                                 double tolerance = 1e-9, int max_order = 1024);

}  // namespace sfs
