#include "sfs/target_model.hpp"

#include "sfs/log_space.hpp"
#include "sfs/rng.hpp"

#include <boost/random/discrete_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cmath>
#include <numbers>

namespace sfs {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_dim(const TargetSpec& target, Eigen::Index d) {
  if (d != target.dim)
    throw UsageError("dimension mismatch: target '" + target.name + "' has d=" + std::to_string(target.dim) +
                     ", got " + std::to_string(d));
}

// |y|^2/(2T) + (d/2) log(2 pi T); the same expression is used on both sides of
// phi = rho/G_T so that rho == G_T gives log phi == 0 exactly.
double log_inv_heat_kernel(int dim, double horizon, double squared_norm) {
  return squared_norm / (2.0 * horizon) + 0.5 * dim * std::log(kTwoPi * horizon);
}

double kde_log_norm(const TriangularKdeParams& p) {
  return std::log(static_cast<double>(p.centers.size()) * p.bandwidth);
}

}  // namespace

EpsilonTarget make_epsilon_target(TargetSpec base, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw UsageError("epsilon must lie in [0, 1), got " + std::to_string(epsilon));
  if (epsilon > 0.0 && !base.normalized)
    throw UsageError("epsilon mixture needs a normalized target; '" + base.name + "' is flagged unnormalized");
  return EpsilonTarget{std::move(base), epsilon};
}

TargetSpec with_log_offset(TargetSpec target, double shift) {
  target.log_offset += shift;
  if (shift != 0.0) target.normalized = false;
  return target;
}

double log_heat_kernel(int dim, double horizon, const Vector& y) {
  return -log_inv_heat_kernel(dim, horizon, y.squaredNorm());
}

double log_density(const TargetSpec& target, const Vector& y) {
  check_dim(target, y.size());
  return target.log_rho(y) + target.log_offset;
}

double log_phi(const TargetSpec& target, const Vector& y) {
  check_dim(target, y.size());
  const double lr = target.log_rho(y);
  if (lr == kNegInf) return kNegInf;
  return (lr + log_inv_heat_kernel(target.dim, target.horizon, y.squaredNorm())) + target.log_offset;
}

Vector grad_log_phi(const TargetSpec& target, const Vector& y) {
  check_dim(target, y.size());
  if (target.grad_log_rho) return target.grad_log_rho(y) + y / target.horizon;
  if (target.grad_log_rho_batch) {
    Matrix g(target.dim, 1);
    target.grad_log_rho_batch(y, g);
    return g.col(0) + y / target.horizon;
  }
  throw UsageError("target '" + target.name + "' has no gradient");
}

void log_phi_batch(const TargetSpec& target, const Eigen::Ref<const Matrix>& points, Eigen::Ref<Vector> out,
                   bool include_offset) {
  check_dim(target, points.rows());
  const Eigen::Index m = points.cols();
  if (target.log_rho_batch) {
    target.log_rho_batch(points, out);
  } else {
    for (Eigen::Index j = 0; j < m; ++j) out[j] = target.log_rho(points.col(j));
  }
  const double two_t = 2.0 * target.horizon;
  const double c = 0.5 * target.dim * std::log(kTwoPi * target.horizon);
  // -inf + finite stays -inf, so no masking is needed.
  Vector sq(m);
  column_squared_norms(points, sq);
  out.array() += sq.array() / two_t + c;
  if (include_offset && target.log_offset != 0.0) out.array() += target.log_offset;
}

void grad_log_phi_batch(const TargetSpec& target, const Eigen::Ref<const Matrix>& points, Eigen::Ref<Matrix> out) {
  check_dim(target, points.rows());
  if (target.grad_log_rho_batch) {
    target.grad_log_rho_batch(points, out);
  } else if (target.grad_log_rho) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) out.col(j) = target.grad_log_rho(points.col(j));
  } else {
    throw UsageError("target '" + target.name + "' has no gradient");
  }
  out += points / target.horizon;
}

double mix_log_phi(double log_phi_value, double epsilon) {
  return log_add_exp(std::log1p(-epsilon) + log_phi_value, std::log(epsilon));
}

double log_phi_epsilon(const EpsilonTarget& target, const Vector& y) {
  if (!(target.epsilon >= 0.0 && target.epsilon < 1.0)) throw UsageError("epsilon must lie in [0, 1)");
  const double l = log_phi(target.base, y);
  if (target.epsilon == 0.0) return l;
  return mix_log_phi(l, target.epsilon);
}

double log_density_epsilon(const EpsilonTarget& target, const Vector& y) {
  const double lr = log_density(target.base, y);
  if (target.epsilon == 0.0) return lr;
  return log_add_exp(std::log1p(-target.epsilon) + lr,
                     std::log(target.epsilon) + log_heat_kernel(target.base.dim, target.base.horizon, y));
}

double excess_potential(const TargetSpec& target, const Vector& x) {
  return -log_density(target, x) - x.squaredNorm() / (2.0 * target.horizon);
}

// ---------------------------------------------------------------------------

TargetSpec make_gaussian_target(const GaussianParams& params, double horizon) {
  if (!(params.variance > 0.0)) throw UsageError("Gaussian variance must be positive");
  if (!(horizon > 0.0)) throw UsageError("horizon T must be positive");
  if (params.mean.size() < 1) throw UsageError("Gaussian mean must have at least one coordinate");
  const int d = static_cast<int>(params.mean.size());
  const Vector m = params.mean;
  const double s2 = params.variance;
  const double c = 0.5 * d * std::log(kTwoPi * s2);

  TargetSpec t;
  t.dim = d;
  t.horizon = horizon;
  t.name = "gaussian";
  t.log_rho = [m, s2, c](const Vector& y) {
    const Vector r = y - m;
    return -(r.squaredNorm() / (2.0 * s2) + c);
  };
  t.grad_log_rho = [m, s2](const Vector& y) -> Vector { return -(y - m) / s2; };
  t.log_rho_batch = [m, s2, c](const Eigen::Ref<const Matrix>& pts, Eigen::Ref<Vector> out) {
    const Matrix r = pts.colwise() - m;
    column_squared_norms(r, out);
    out = -(out.array() / (2.0 * s2) + c).matrix();
  };
  t.grad_log_rho_batch = [m, s2](const Eigen::Ref<const Matrix>& pts, Eigen::Ref<Matrix> out) {
    out = -(pts.colwise() - m) / s2;
  };
  t.family = params;
  t.moments = AnalyticMoments{m, s2 * Matrix::Identity(d, d)};
  // log phi has Hessian (1/T - 1/sigma^2) I: globally Lipschitz only when it vanishes.
  t.a2_certified = (s2 == horizon);
  if (t.a2_certified) t.lipschitz_log_phi = m.norm() / horizon;
  return t;
}

TargetSpec make_standard_target(int dim, double horizon) {
  if (dim < 1) throw UsageError("dimension must be positive");
  TargetSpec t = make_gaussian_target(GaussianParams{Vector::Zero(dim), horizon}, horizon);
  t.name = "standard";
  return t;
}

TargetSpec make_gaussian_mixture_target(const std::vector<MixtureComponent>& components, double horizon) {
  if (components.empty()) throw UsageError("Gaussian mixture needs at least one component");
  if (!(horizon > 0.0)) throw UsageError("horizon T must be positive");
  const int d = static_cast<int>(components.front().mean.size());
  if (d < 1) throw UsageError("mixture component means must have at least one coordinate");
  const auto k = static_cast<Eigen::Index>(components.size());
  Matrix means(d, k);
  Vector log_w(k);
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& comp = components[static_cast<std::size_t>(i)];
    if (comp.mean.size() != d) throw UsageError("mixture component means differ in dimension");
    if (!(comp.weight > 0.0)) throw UsageError("mixture weights must be positive");
    means.col(i) = comp.mean;
    log_w[i] = std::log(comp.weight);
    total += comp.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw UsageError("mixture weights must sum to 1");

  const double two_t = 2.0 * horizon;
  const double c = 0.5 * d * std::log(kTwoPi * horizon);

  TargetSpec t;
  t.dim = d;
  t.horizon = horizon;
  t.name = "gaussian_mixture";
  t.log_rho = [means, log_w, two_t, c](const Vector& y) {
    const Vector e = log_w - (means.colwise() - y).colwise().squaredNorm().transpose() / two_t;
    return log_sum_exp(e) - c;
  };
  t.grad_log_rho = [means, log_w, two_t, horizon](const Vector& y) -> Vector {
    Vector e = log_w - (means.colwise() - y).colwise().squaredNorm().transpose() / two_t;
    const double lse = log_sum_exp(e);
    const Vector resp = (e.array() - lse).exp().matrix();
    return (means * resp - y) / horizon;
  };
  t.log_rho_batch = [means, log_w, two_t, c](const Eigen::Ref<const Matrix>& pts, Eigen::Ref<Vector> out) {
    // k x M exponents, reduced column by column.
    const Eigen::Index m = pts.cols();
    Matrix e = (-2.0 * means.transpose()) * pts;
    e.colwise() += means.colwise().squaredNorm().transpose();
    e.rowwise() += pts.colwise().squaredNorm();
    e = ((-e / two_t).colwise() + log_w).eval();
    for (Eigen::Index j = 0; j < m; ++j) out[j] = log_sum_exp(e.col(j)) - c;
  };
  t.grad_log_rho_batch = [means, log_w, two_t, horizon](const Eigen::Ref<const Matrix>& pts, Eigen::Ref<Matrix> out) {
    const Eigen::Index m = pts.cols();
    Matrix e = (-2.0 * means.transpose()) * pts;
    e.colwise() += means.colwise().squaredNorm().transpose();
    e.rowwise() += pts.colwise().squaredNorm();
    e = ((-e / two_t).colwise() + log_w).eval();
    for (Eigen::Index j = 0; j < m; ++j) {
      const double mx = e.col(j).maxCoeff();
      e.col(j) = (e.col(j).array() - mx).exp().matrix();
      e.col(j) /= e.col(j).sum();
    }
    out = (means * e - pts) / horizon;
  };

  Vector mean = Vector::Zero(d);
  Matrix second = Matrix::Zero(d, d);
  double c0 = 0.0;
  for (const auto& comp : components) {
    mean += comp.weight * comp.mean;
    second += comp.weight * comp.mean * comp.mean.transpose();
    c0 = std::max(c0, comp.mean.norm() / horizon);
  }
  t.family = GaussianMixtureParams{components};
  t.moments = AnalyticMoments{mean, horizon * Matrix::Identity(d, d) + second - mean * mean.transpose()};
  t.a2_certified = true;
  t.lipschitz_log_phi = c0;
  return t;
}

double triangular_kde_density(const TriangularKdeParams& p, double x) {
  double s = 0.0;
  for (double c : p.centers) s += std::max(0.0, 1.0 - std::abs(x - c) / p.bandwidth);
  return s / (static_cast<double>(p.centers.size()) * p.bandwidth);
}

TargetSpec make_triangular_kde_target(const TriangularKdeParams& params, double horizon) {
  if (params.centers.empty()) throw UsageError("triangular KDE needs at least one center");
  if (!(params.bandwidth > 0.0)) throw UsageError("triangular KDE bandwidth must be positive");
  if (!(horizon > 0.0)) throw UsageError("horizon T must be positive");
  const std::vector<double> centers = params.centers;
  const double h = params.bandwidth;
  const double inv_h = 1.0 / h;
  const double log_norm = kde_log_norm(params);

  TargetSpec t;
  t.dim = 1;
  t.horizon = horizon;
  t.name = "triangular_kde";
  t.support = Support::compact;
  t.log_rho = [centers, inv_h, log_norm](const Vector& y) {
    double s = 0.0;
    for (double c : centers) s += std::max(0.0, 1.0 - std::abs(y[0] - c) * inv_h);
    return std::log(s) - log_norm;
  };
  // Left derivative at kinks and support edges; 0 where rho vanishes.
  t.grad_log_rho = [centers, h, inv_h](const Vector& y) -> Vector {
    const double x = y[0];
    double s = 0.0, ds = 0.0;
    for (double c : centers) {
      s += std::max(0.0, 1.0 - std::abs(x - c) * inv_h);
      if (x > c - h && x <= c) ds += 1.0 / h;
      else if (x > c && x <= c + h) ds -= 1.0 / h;
    }
    return Vector::Constant(1, s > 0.0 ? ds / s : 0.0);
  };
  t.log_rho_batch = [centers, inv_h, log_norm](const Eigen::Ref<const Matrix>& pts, Eigen::Ref<Vector> out) {
    with_row(pts, 0, [&](const auto& x) {
      out.array() = (1.0 - (x - centers[0]).abs() * inv_h).max(0.0);
      for (std::size_t j = 1; j < centers.size(); ++j) out.array() += (1.0 - (x - centers[j]).abs() * inv_h).max(0.0);
      out.array() = out.array().log() - log_norm;
    });
  };
  t.grad_log_rho_batch = [centers, h, inv_h](const Eigen::Ref<const Matrix>& pts, Eigen::Ref<Matrix> out) {
    with_row(pts, 0, [&](const auto& x) {
      Eigen::ArrayXd s = Eigen::ArrayXd::Zero(pts.cols());
      Eigen::ArrayXd ds = Eigen::ArrayXd::Zero(pts.cols());
      for (double c : centers) {
        s += (1.0 - (x - c).abs() * inv_h).max(0.0);
        ds += ((x > c - h) && (x <= c)).template cast<double>() / h - ((x > c) && (x <= c + h)).template cast<double>() / h;
      }
      out.row(0) = (s > 0.0).select(ds / s, 0.0).transpose().matrix();
    });
  };

  const Eigen::Map<const Eigen::ArrayXd> cs(centers.data(), static_cast<Eigen::Index>(centers.size()));
  const double mean = cs.mean();
  const double var = h * h / 6.0 + (cs - mean).square().mean();
  t.family = params;
  t.moments = AnalyticMoments{Vector::Constant(1, mean), Matrix::Constant(1, 1, var)};
  t.a2_certified = false;
  return t;
}

RowMatrix sample_reference(const TargetSpec& target, std::int64_t count, std::uint64_t seed) {
  if (count < 1) throw UsageError("reference sample size must be positive");
  RowMatrix out(count, target.dim);
  NormalSource normal(seed);
  Engine& eng = normal.engine();

  if (const auto* g = std::get_if<GaussianParams>(&target.family)) {
    const double sd = std::sqrt(g->variance);
    for (std::int64_t i = 0; i < count; ++i)
      for (int k = 0; k < target.dim; ++k) out(i, k) = g->mean[k] + sd * normal();
  } else if (const auto* mix = std::get_if<GaussianMixtureParams>(&target.family)) {
    std::vector<double> w;
    for (const auto& c : mix->components) w.push_back(c.weight);
    boost::random::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    const double sd = std::sqrt(target.horizon);
    for (std::int64_t i = 0; i < count; ++i) {
      const Vector& m = mix->components[pick(eng)].mean;
      for (int k = 0; k < target.dim; ++k) out(i, k) = m[k] + sd * normal();
    }
  } else if (const auto* kde = std::get_if<TriangularKdeParams>(&target.family)) {
    // Mixture of triangles: pick a kernel, then invert its CDF.
    boost::random::uniform_int_distribution<std::size_t> pick(0, kde->centers.size() - 1);
    boost::random::uniform_01<double> unif;
    for (std::int64_t i = 0; i < count; ++i) {
      const double c = kde->centers[pick(eng)];
      const double u = unif(eng);
      const double z = u < 0.5 ? std::sqrt(2.0 * u) - 1.0 : 1.0 - std::sqrt(2.0 * (1.0 - u));
      out(i, 0) = c + kde->bandwidth * z;
    }
  } else {
    throw UsageError("target '" + target.name + "' has no exact sampler");
  }
  return out;
}

}  // namespace sfs
