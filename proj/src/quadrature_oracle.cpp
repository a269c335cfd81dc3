#include "sfs/quadrature_oracle.hpp"

#include "sfs/log_space.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <map>
#include <mutex>

namespace sfs {

namespace {

// Orthonormal probabilists' Hermite recurrence at x, returning
// log sum_{k<n} p_k(x)^2 and the Newton correction p_n / p_n'.
struct HermiteEval {
  double log_sum_sq;
  double newton_step;
};

HermiteEval hermite_eval(int n, double x) {
  double pm1 = 0.0, p = 1.0, sum = 1.0, log_scale = 0.0;
  for (int k = 0; k + 1 < n; ++k) {
    const double pn = (x * p - std::sqrt(static_cast<double>(k)) * pm1) / std::sqrt(static_cast<double>(k + 1));
    pm1 = p;
    p = pn;
    sum += p * p;
    if (std::abs(p) > 1e100) {
      p *= 1e-100;
      pm1 *= 1e-100;
      sum *= 1e-200;
      log_scale += 100.0 * std::log(10.0);
    }
  }
  // p now holds p_{n-1}, pm1 holds p_{n-2}.
  const double pn = (x * p - std::sqrt(static_cast<double>(n - 1)) * pm1) / std::sqrt(static_cast<double>(n));
  const double dpn = std::sqrt(static_cast<double>(n)) * p;
  return {std::log(sum) + 2.0 * log_scale, dpn != 0.0 ? pn / dpn : 0.0};
}

QuadratureRule build_rule(int n) {
  QuadratureRule rule;
  rule.order = n;
  rule.nodes.resize(n);
  if (n == 1) {
    rule.nodes[0] = 0.0;
  } else {
    // Golub-Welsch: eigenvalues of the symmetric Jacobi matrix.
    Vector diag = Vector::Zero(n);
    Vector sub(n - 1);
    for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Matrix> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    rule.nodes = solver.eigenvalues();
    for (int i = 0; i < n; ++i)
      for (int it = 0; it < 2; ++it) rule.nodes[i] -= hermite_eval(n, rule.nodes[i]).newton_step;
    // Enforce exact symmetry about 0.
    for (int i = 0; i < n / 2; ++i) {
      const double a = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
      rule.nodes[i] = -a;
      rule.nodes[n - 1 - i] = a;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  }
  rule.log_weights.resize(n);
  for (int i = 0; i < n; ++i) rule.log_weights[i] = -hermite_eval(n, rule.nodes[i]).log_sum_sq;
  for (int i = 0; i < n / 2; ++i) rule.log_weights[n - 1 - i] = rule.log_weights[i];
  rule.log_weights.array() -= log_sum_exp(rule.log_weights);
  rule.weights = rule.log_weights.array().exp().matrix();
  return rule;
}

}  // namespace

std::shared_ptr<const QuadratureRule> gauss_hermite_rule(int order) {
  if (order < 1) throw UsageError("quadrature order must be positive");
  static std::mutex mu;
  static std::map<int, std::shared_ptr<const QuadratureRule>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(order);
  if (it != cache.end()) return it->second;
  auto rule = std::make_shared<const QuadratureRule>(build_rule(order));
  cache.emplace(order, rule);
  return rule;
}

QuadratureExpectation gh_expectation(const TargetSpec& target, double t, const Vector& y, const QuadratureRule& rule) {
  if (target.dim < 1 || target.dim > 2) throw UsageError("quadrature oracle supports d in {1, 2} only");
  if (y.size() != target.dim) throw UsageError("quadrature oracle: dimension mismatch");
  if (!(t >= 0.0 && t < target.horizon)) throw UsageError("quadrature oracle: t must lie in [0, T)");

  const int n = rule.order;
  const int d = target.dim;
  const Eigen::Index count = d == 1 ? n : static_cast<Eigen::Index>(n) * n;
  const double s = std::sqrt(target.horizon - t);

  Matrix z(d, count);
  Vector log_w(count);
  if (d == 1) {
    z.row(0) = rule.nodes.transpose();
    log_w = rule.log_weights;
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const Eigen::Index c = static_cast<Eigen::Index>(i) * n + j;
        z(0, c) = rule.nodes[i];
        z(1, c) = rule.nodes[j];
        log_w[c] = rule.log_weights[i] + rule.log_weights[j];
      }
  }
  const Matrix u = (s * z).colwise() + y;
  Vector lp(count);
  log_phi_batch(target, u, lp);
  const Vector terms = lp + log_w;

  QuadratureExpectation out;
  out.grad_log_h = Vector::Zero(d);
  out.log_h = log_sum_exp(terms);
  if (out.log_h == kNegInf) {
    out.degenerate = true;
    return out;
  }
  const Eigen::ArrayXd resp = (terms.array() - out.log_h).exp();
  if (target.has_gradient()) {
    Matrix g(d, count);
    grad_log_phi_batch(target, u, g);
    for (int k = 0; k < d; ++k)
      out.grad_log_h[k] = (resp > 0.0).select(resp * g.row(k).transpose().array(), 0.0).sum();
  } else {
    // Gaussian integration by parts: grad E[phi(y + sZ)] = E[Z phi(y + sZ)] / s.
    for (int k = 0; k < d; ++k) out.grad_log_h[k] = (resp * z.row(k).transpose().array()).sum() / s;
  }
  return out;
}

namespace {

// grad log h for the one-dimensional triangular KDE: adaptive Gauss-Kronrod
// in u = y + sqrt(T - t) z over the pieces between kinks, where phi is smooth.
QuadratureDrift kde_piecewise_drift(const TargetSpec& target, const TriangularKdeParams& p, double t, double y,
                                    double tolerance) {
  using Rule = boost::math::quadrature::gauss_kronrod<double, 31>;
  const double s2 = target.horizon - t;
  std::vector<double> knots;
  for (double c : p.centers) knots.insert(knots.end(), {c - p.bandwidth, c, c + p.bandwidth});
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  auto log_f = [&](double u) {
    const double lp = log_phi(target, Vector::Constant(1, u));
    return lp == kNegInf ? kNegInf : lp - 0.5 * (u - y) * (u - y) / s2;
  };
  double shift = kNegInf;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i)
    for (int k = 0; k <= 8; ++k) shift = std::max(shift, log_f(knots[i] + (knots[i + 1] - knots[i]) * k / 8.0));

  QuadratureDrift out;
  out.value = Vector::Zero(1);
  if (shift == kNegInf) {
    out.degenerate = true;
    return out;
  }
  double mass = 0.0, moment = 0.0, mass_err = 0.0, moment_err = 0.0;
  int evaluations = 0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    double e1 = 0.0, e2 = 0.0, l1 = 0.0;
    auto w = [&](double u) {
      ++evaluations;
      const double l = log_f(u);
      return l == kNegInf ? 0.0 : std::exp(l - shift);
    };
    mass += Rule::integrate(w, knots[i], knots[i + 1], 15, 1e-14, &e1, &l1);
    moment += Rule::integrate([&](double u) { return w(u) * (u - y); }, knots[i], knots[i + 1], 15, 1e-14, &e2, &l1);
    mass_err += e1;
    moment_err += e2;
  }
  if (!(mass > 0.0)) {
    out.degenerate = true;
    return out;
  }
  out.value[0] = moment / (mass * s2);
  out.log_h = shift + std::log(mass) - 0.5 * std::log(2.0 * std::numbers::pi * s2);
  out.order = evaluations;
  out.converged = (moment_err + std::abs(moment) * mass_err / mass) / (mass * s2) < tolerance;
  return out;
}

}  // namespace

QuadratureDrift quadrature_drift(const TargetSpec& target, double t, const Vector& y, int order, double tolerance,
                                 int max_order) {
  if (order < 1) throw UsageError("quadrature order must be positive");
  if (const auto* kde = std::get_if<TriangularKdeParams>(&target.family); kde && target.dim == 1) {
    if (y.size() != 1) throw UsageError("quadrature oracle: dimension mismatch");
    if (!(t >= 0.0 && t < target.horizon)) throw UsageError("quadrature oracle: t must lie in [0, T)");
    return kde_piecewise_drift(target, *kde, t, y[0], tolerance);
  }
  QuadratureDrift out;
  auto prev = gh_expectation(target, t, y, *gauss_hermite_rule(order));
  out.value = prev.grad_log_h;
  out.log_h = prev.log_h;
  out.order = order;
  out.degenerate = prev.degenerate;
  while (order < max_order) {
    order = std::min(2 * order, max_order);
    auto next = gh_expectation(target, t, y, *gauss_hermite_rule(order));
    const double diff = (next.grad_log_h - prev.grad_log_h).cwiseAbs().maxCoeff();
    out.value = next.grad_log_h;
    out.log_h = next.log_h;
    out.order = order;
    out.degenerate = next.degenerate;
    if (diff < tolerance && !next.degenerate) {
      out.converged = true;
      return out;
    }
    prev = std::move(next);
  }
  return out;
}

}  // namespace sfs
