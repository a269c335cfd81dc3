#include "sfs/target_model.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace sfs;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

TEST_CASE("standard Gaussian target has log phi identically zero") {
  for (int d : {1, 3}) {
    const TargetSpec t = make_gaussian_target({Vector::Zero(d), 1.0}, 1.0);
    std::mt19937_64 eng(1);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int i = 0; i < 50; ++i) {
      Vector y(d);
      for (int k = 0; k < d; ++k) y[k] = n(eng);
      CHECK(log_phi(t, y) == 0.0);
    }
  }
}

TEST_CASE("log offset shifts log phi by the constant") {
  const TargetSpec t = with_log_offset(make_standard_target(2, 1.0), 3.0);
  CHECK_FALSE(t.normalized);
  CHECK(log_phi(t, vec({0.3, -1.7})) == 3.0);
  CHECK(log_phi(t, vec({4.0, 2.0})) == 3.0);

  const TargetSpec kde = make_triangular_kde_target({{-1.0, 0.0, 1.0}, 0.5}, 1.0);
  const TargetSpec shifted = with_log_offset(kde, 3.0);
  for (double y : {-1.2, -0.3, 0.0, 0.4, 1.1}) {
    CHECK(log_phi(shifted, vec({y})) - log_phi(kde, vec({y})) == doctest::Approx(3.0).epsilon(1e-14));
  }
}

TEST_CASE("triangular KDE log phi by direct arithmetic") {
  const TargetSpec t = make_triangular_kde_target({{0.0}, 1.0}, 1.0);
  const double expected = std::log(0.5) + 0.125 + 0.5 * kLog2Pi;
  CHECK(log_phi(t, vec({0.5})) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("Gaussian catalog log phi closed forms") {
  SUBCASE("mean 2, variance T") {
    const TargetSpec t = make_gaussian_target({vec({2.0}), 1.0}, 1.0);
    for (double y : {-3.0, -0.5, 0.0, 1.0, 2.5}) CHECK(log_phi(t, vec({y})) == doctest::Approx(2.0 * y - 2.0).epsilon(1e-13));
    CHECK(t.a2_certified);
  }
  SUBCASE("mean 0, variance 0.25") {
    const TargetSpec t = make_gaussian_target({vec({0.0}), 0.25}, 1.0);
    for (double y : {-2.0, -0.5, 0.0, 0.7, 1.5})
      CHECK(log_phi(t, vec({y})) == doctest::Approx(-1.5 * y * y + 0.5 * std::log(4.0)).epsilon(1e-13));
    CHECK_FALSE(t.a2_certified);
  }
  CHECK_THROWS_AS(make_gaussian_target({vec({0.0}), 0.0}, 1.0), UsageError);
  CHECK_THROWS_AS(make_gaussian_target({vec({0.0}), -1.0}, 1.0), UsageError);
}

TEST_CASE("Gaussian mixture catalog") {
  SUBCASE("single component at zero is phi == 1") {
    const TargetSpec t = make_gaussian_mixture_target({{1.0, vec({0.0})}}, 1.0);
    CHECK(log_phi(t, vec({1.3})) == doctest::Approx(0.0).epsilon(1e-15));
    REQUIRE(t.lipschitz_log_phi);
    CHECK(*t.lipschitz_log_phi == 0.0);
  }
  SUBCASE("symmetric pair at +-2") {
    const TargetSpec t = make_gaussian_mixture_target({{0.5, vec({-2.0})}, {0.5, vec({2.0})}}, 1.0);
    // phi(y) = cosh(2y) e^{-2}
    for (double y : {-1.0, 0.0, 0.5, 1.0, 3.0})
      CHECK(log_phi(t, vec({y})) == doctest::Approx(std::log(std::cosh(2.0 * y)) - 2.0).epsilon(1e-13));
    CHECK(log_phi(t, vec({1.0})) == doctest::Approx(std::log(std::cosh(2.0)) - 2.0).epsilon(1e-13));
    CHECK(grad_log_phi(t, vec({0.0}))[0] == doctest::Approx(0.0).epsilon(1e-15));
    REQUIRE(t.lipschitz_log_phi);
    CHECK(*t.lipschitz_log_phi == 2.0);
    CHECK(t.a2_certified);
    REQUIRE(t.moments);
    CHECK(t.moments->covariance(0, 0) == doctest::Approx(5.0));
  }
  CHECK_THROWS_AS(make_gaussian_mixture_target({}, 1.0), UsageError);
  CHECK_THROWS_AS(make_gaussian_mixture_target({{0.5, vec({0.0})}, {0.4, vec({1.0})}}, 1.0), UsageError);
  CHECK_THROWS_AS(make_gaussian_mixture_target({{-0.5, vec({0.0})}, {1.5, vec({1.0})}}, 1.0), UsageError);
}

TEST_CASE("triangular KDE density values") {
  const TargetSpec t = make_triangular_kde_target({{0.0}, 1.0}, 1.0);
  CHECK(std::exp(log_density(t, vec({0.0}))) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(log_density(t, vec({1.0})) == kNegInf);
  CHECK(log_density(t, vec({-1.0})) == kNegInf);
  CHECK(std::exp(log_density(t, vec({0.5}))) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(t.support == Support::compact);

  const TargetSpec gap = make_triangular_kde_target({{-1.0, 1.0}, 0.5}, 1.0);
  CHECK(log_density(gap, vec({0.0})) == kNegInf);
  CHECK(log_phi(gap, vec({0.0})) == kNegInf);
  CHECK(log_phi(gap, vec({40.0})) == kNegInf);

  CHECK_THROWS_AS(make_triangular_kde_target({{}, 1.0}, 1.0), UsageError);
  CHECK_THROWS_AS(make_triangular_kde_target({{0.0}, 0.0}, 1.0), UsageError);
}

TEST_CASE("triangular KDE integrates to one") {
  for (const TriangularKdeParams& p : {TriangularKdeParams{{0.0}, 1.0}, TriangularKdeParams{{-1.0, 0.0, 1.0}, 0.5},
                                       TriangularKdeParams{{-0.3, 0.1, 2.0, 2.2}, 0.7}}) {
    const double lo = *std::min_element(p.centers.begin(), p.centers.end()) - p.bandwidth;
    const double hi = *std::max_element(p.centers.begin(), p.centers.end()) + p.bandwidth;
    const int n = 100000;
    const double step = (hi - lo) / n;
    const TargetSpec t = make_triangular_kde_target(p, 1.0);
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double x = lo + i * step;
      const double f = std::exp(log_density(t, vec({x})));
      s += (i == 0 || i == n) ? 0.5 * f : f;
    }
    CHECK(s * step == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937_64 eng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  auto check_target = [&](const TargetSpec& t, auto sample_point) {
    for (int i = 0; i < 100; ++i) {
      const Vector y = sample_point();
      const Vector g = t.grad_log_rho(y);
      for (int k = 0; k < t.dim; ++k) {
        Vector yp = y, ym = y;
        yp[k] += 1e-5;
        ym[k] -= 1e-5;
        const double fd = (t.log_rho(yp) - t.log_rho(ym)) / 2e-5;
        CHECK(g[k] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
      }
    }
  };
  const TargetSpec g = make_gaussian_target({vec({0.5, -1.0}), 0.6}, 1.0);
  check_target(g, [&] { return vec({u(eng), u(eng)}); });
  const TargetSpec m = make_gaussian_mixture_target({{0.3, vec({-2.0, 1.0})}, {0.7, vec({1.5, 0.0})}}, 1.3);
  check_target(m, [&] { return vec({u(eng), u(eng)}); });
  const TargetSpec kde = make_triangular_kde_target({{-1.0, 0.0, 1.0}, 0.5}, 1.0);
  // Points inside the support, away from every kink.
  std::uniform_real_distribution<double> in(-1.5, 1.5);
  check_target(kde, [&] {
    for (;;) {
      const double x = in(eng);
      bool near_kink = false;
      for (double k = -1.5; k <= 1.5; k += 0.5) near_kink = near_kink || std::abs(x - k) < 0.02;
      if (!near_kink) return vec({x});
    }
  });
}

TEST_CASE("triangular KDE gradient takes the left derivative at kinks") {
  const TargetSpec t = make_triangular_kde_target({{0.0}, 1.0}, 1.0);
  // log rho = log(1 - |x|): left derivative at 0 is +1.
  CHECK(t.grad_log_rho(vec({0.0}))[0] == doctest::Approx(1.0));
  CHECK(t.grad_log_rho(vec({2.0}))[0] == 0.0);
}

TEST_CASE("batch evaluation agrees with pointwise evaluation") {
  std::mt19937_64 eng(9);
  std::normal_distribution<double> n(0.0, 1.5);
  const std::vector<TargetSpec> targets{
      make_gaussian_target({vec({0.5, -1.0}), 0.6}, 1.0),
      make_gaussian_mixture_target({{0.3, vec({-2.0, 1.0})}, {0.7, vec({1.5, 0.0})}}, 1.3),
      make_triangular_kde_target({{-1.0, 0.0, 1.0}, 0.5}, 1.0),
      with_log_offset(make_standard_target(2, 2.0), -4.0)};
  for (const TargetSpec& t : targets) {
    Matrix pts(t.dim, 64);
    for (Eigen::Index j = 0; j < pts.size(); ++j) pts.data()[j] = n(eng);
    Vector lp(64);
    Matrix g(t.dim, 64);
    log_phi_batch(t, pts, lp);
    grad_log_phi_batch(t, pts, g);
    for (Eigen::Index j = 0; j < 64; ++j) {
      const double l = log_phi(t, pts.col(j));
      if (l == kNegInf) {
        CHECK(lp[j] == kNegInf);
        continue;
      }
      CHECK(lp[j] == doctest::Approx(l).epsilon(1e-12).scale(1.0));
      const Vector gj = grad_log_phi(t, pts.col(j));
      for (int k = 0; k < t.dim; ++k) CHECK(g(k, j) == doctest::Approx(gj[k]).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("log phi is never NaN or +inf") {
  const TargetSpec kde = make_triangular_kde_target({{-1.0, 0.0, 1.0}, 0.5}, 1.0);
  const TargetSpec g = make_gaussian_target({vec({0.0}), 0.25}, 1.0);
  for (double y : {-1e6, -50.0, -1.5, 0.0, 1.5, 50.0, 1e6}) {
    const double a = log_phi(kde, vec({y}));
    const double b = log_phi(g, vec({y}));
    CHECK_FALSE(std::isnan(a));
    CHECK_FALSE(std::isnan(b));
    CHECK(a < std::numeric_limits<double>::infinity());
    CHECK(b < std::numeric_limits<double>::infinity());
  }
}

TEST_CASE("dimension mismatch is a usage error") {
  const TargetSpec t = make_standard_target(2, 1.0);
  CHECK_THROWS_AS(log_phi(t, vec({1.0})), UsageError);
  CHECK_THROWS_AS(grad_log_phi(t, vec({1.0, 2.0, 3.0})), UsageError);
  CHECK_THROWS_AS(log_density(t, vec({1.0})), UsageError);
}

TEST_CASE("epsilon mixture") {
  const TargetSpec kde = make_triangular_kde_target({{0.0}, 1.0}, 1.0);
  const TargetSpec flat = make_standard_target(1, 1.0);

  SUBCASE("outside the support the floor remains") {
    CHECK(log_phi_epsilon(make_epsilon_target(kde, 0.1), vec({5.0})) == doctest::Approx(std::log(0.1)).epsilon(1e-15));
  }
  SUBCASE("phi == 1 stays 1") {
    CHECK(log_phi_epsilon(make_epsilon_target(flat, 0.5), vec({0.7})) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  }
  SUBCASE("composition with the KDE value") {
    const double phi = 0.5 * std::exp(0.125) * std::sqrt(2.0 * std::numbers::pi);
    CHECK(log_phi_epsilon(make_epsilon_target(kde, 0.1), vec({0.5})) ==
          doctest::Approx(std::log(0.9 * phi + 0.1)).epsilon(1e-14));
  }
  SUBCASE("epsilon = 0 reduces to the base") {
    for (double y : {-0.5, 0.2, 3.0}) CHECK(log_phi_epsilon(make_epsilon_target(kde, 0.0), vec({y})) == log_phi(kde, vec({y})));
  }
  SUBCASE("floor, monotone convergence as epsilon shrinks") {
    for (double y : {-0.9, -0.5, 0.0, 0.3, 0.95, 2.0}) {
      double prev_gap = std::numeric_limits<double>::infinity();
      const double l = log_phi(kde, vec({y}));
      for (double eps : {0.5, 0.2, 0.1, 0.01, 1e-4, 1e-8}) {
        const double le = log_phi_epsilon(make_epsilon_target(kde, eps), vec({y}));
        CHECK(std::isfinite(le));
        CHECK(le >= std::log(eps) - 1e-15);
        if (l > kNegInf && l < 0.0) {
          const double gap = std::abs(le - l);
          CHECK(gap <= prev_gap);
          prev_gap = gap;
        }
      }
      if (l > kNegInf) CHECK(log_phi_epsilon(make_epsilon_target(kde, 1e-12), vec({y})) == doctest::Approx(l).epsilon(1e-9));
    }
  }
  SUBCASE("density of the mixture") {
    const EpsilonTarget e = make_epsilon_target(kde, 0.2);
    const double rho = 0.5;
    const double g = std::exp(-0.125) / std::sqrt(2.0 * std::numbers::pi);
    CHECK(std::exp(log_density_epsilon(e, vec({0.5}))) == doctest::Approx(0.8 * rho + 0.2 * g).epsilon(1e-14));
  }
  SUBCASE("construction checks") {
    CHECK_THROWS_AS(make_epsilon_target(kde, 1.0), UsageError);
    CHECK_THROWS_AS(make_epsilon_target(kde, -0.1), UsageError);
    CHECK_THROWS_AS(make_epsilon_target(with_log_offset(kde, 1.0), 0.1), UsageError);
    CHECK_NOTHROW(make_epsilon_target(with_log_offset(kde, 1.0), 0.0));
  }
}

TEST_CASE("excess potential of a variance-T Gaussian is constant") {
  const TargetSpec t = make_gaussian_target({vec({0.0, 0.0}), 2.0}, 2.0);
  const double v0 = excess_potential(t, vec({0.0, 0.0}));
  CHECK(excess_potential(t, vec({3.0, -1.0})) == doctest::Approx(v0));
  // For mean m the excess potential is affine with slope -m/T.
  const TargetSpec s = make_gaussian_target({vec({1.0}), 1.0}, 1.0);
  CHECK(excess_potential(s, vec({2.0})) - excess_potential(s, vec({1.0})) == doctest::Approx(-1.0));
}

TEST_CASE("reference sampling matches the target moments") {
  const std::int64_t k = 200000;
  SUBCASE("Gaussian") {
    const TargetSpec t = make_gaussian_target({vec({1.0, -2.0}), 0.5}, 1.0);
    const RowMatrix s = sample_reference(t, k, 3);
    for (int c = 0; c < 2; ++c) {
      CHECK(std::abs(s.col(c).mean() - t.moments->mean[c]) < 4.0 * std::sqrt(0.5 / k));
      const double var = (s.col(c).array() - s.col(c).mean()).square().sum() / (k - 1);
      CHECK(var == doctest::Approx(0.5).epsilon(0.02));
    }
  }
  SUBCASE("mixture") {
    const TargetSpec t = make_gaussian_mixture_target({{0.5, vec({-2.0})}, {0.5, vec({2.0})}}, 1.0);
    const RowMatrix s = sample_reference(t, k, 4);
    CHECK(std::abs(s.col(0).mean()) < 4.0 * std::sqrt(5.0 / k));
    const double var = (s.col(0).array() - s.col(0).mean()).square().sum() / (k - 1);
    CHECK(var == doctest::Approx(5.0).epsilon(0.02));
  }
  SUBCASE("triangular KDE") {
    const TriangularKdeParams p{{-1.0, 0.0, 1.0}, 0.5};
    const TargetSpec t = make_triangular_kde_target(p, 1.0);
    const RowMatrix s = sample_reference(t, k, 5);
    CHECK(s.col(0).minCoeff() >= -1.5);
    CHECK(s.col(0).maxCoeff() <= 1.5);
    const double var = (s.col(0).array() - s.col(0).mean()).square().sum() / (k - 1);
    CHECK(var == doctest::Approx(0.25 / 6.0 + 2.0 / 3.0).epsilon(0.02));
    // Empirical CDF against the integral of the density at a few points.
    for (double x : {-1.2, -0.6, 0.1, 0.8}) {
      double cdf = 0.0;
      const int n = 20000;
      for (int i = 0; i < n; ++i) {
        const double a = -1.5 + (x + 1.5) * i / n, b = -1.5 + (x + 1.5) * (i + 1) / n;
        cdf += 0.5 * (triangular_kde_density(p, a) + triangular_kde_density(p, b)) * (b - a);
      }
      const double emp = (s.col(0).array() <= x).cast<double>().mean();
      CHECK(std::abs(emp - cdf) < 4.0 * std::sqrt(0.25 / k));
    }
  }
  SUBCASE("same seed, same draws") {
    const TargetSpec t = make_triangular_kde_target({{0.0, 2.0}, 0.4}, 1.0);
    CHECK(sample_reference(t, 1000, 11) == sample_reference(t, 1000, 11));
    CHECK(sample_reference(t, 1000, 11) != sample_reference(t, 1000, 12));
  }
}
