#include "sfs/drift.hpp"
#include "sfs/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace sfs;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Matrix normals(int d, int m, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> n;
  Matrix z(d, m);
  for (Eigen::Index j = 0; j < z.size(); ++j) z.data()[j] = n(eng);
  return z;
}

DriftConfig config(DriftMode mode, int m, double eps = 0.0) {
  DriftConfig c;
  c.mode = mode;
  c.mc_batch = m;
  c.epsilon = eps;
  return c;
}

}  // namespace

TEST_CASE("phi == 1 gives exactly zero drift") {
  const TargetSpec t = make_standard_target(2, 1.0);
  std::mt19937_64 eng(1);
  std::uniform_real_distribution<double> u(0.0, 0.999);
  for (int i = 0; i < 20; ++i) {
    const Vector y = normals(2, 1, 100 + i).col(0) * 3.0;
    const DriftEstimate e = drift_mc(t, config(DriftMode::gradient_ratio, 128), u(eng), y, normals(2, 128, i));
    CHECK(e.value[0] == 0.0);
    CHECK(e.value[1] == 0.0);
    CHECK(e.ess_fraction == 1.0);
    CHECK_FALSE(e.degenerate);
  }
}

TEST_CASE("variance-T Gaussian gradient ratio is m/T for any noise") {
  const TargetSpec t = make_gaussian_target({vec({2.0}), 1.0}, 1.0);
  for (int i = 0; i < 10; ++i) {
    const DriftEstimate e = drift_mc(t, config(DriftMode::gradient_ratio, 64), 0.1 * i, vec({0.3 * i - 1.0}), normals(1, 64, i));
    CHECK(e.value[0] == doctest::Approx(2.0).epsilon(1e-13));
  }
}

TEST_CASE("Monte Carlo drift approaches the closed form") {
  // m = 0, sigma^2 = 0.25, T = 1, t = 0, y = 1: (0 - 0.75) / (0.25 + 0.75) = -0.75.
  const TargetSpec t = make_gaussian_target({vec({0.0}), 0.25}, 1.0);
  const double expected = -0.75 / (0.25 + 0.75);
  const int m = 4096;
  int within = 0;
  double mean = 0.0;
  for (int s = 0; s < 50; ++s) {
    const DriftEstimate e = drift_mc(t, config(DriftMode::gradient_ratio, m), 0.0, vec({1.0}), normals(1, m, 1000 + s));
    within += std::abs(e.value[0] - expected) <= 5.0 * e.std_error[0];
    mean += e.value[0] / 50.0;
  }
  CHECK(within >= 49);
  CHECK(std::abs(mean - expected) < 5.0 / std::sqrt(50.0 * m));
}

TEST_CASE("epsilon form outside a compact support falls back to zero") {
  const TargetSpec t = make_triangular_kde_target({{0.0}, 1.0}, 1.0);
  const DriftEstimate e = drift_mc(t, config(DriftMode::stein, 256, 0.1), 0.0, vec({10.0}), normals(1, 256, 3));
  CHECK(e.value[0] == 0.0);
  CHECK_FALSE(e.degenerate);
  CHECK(e.log_denominator == doctest::Approx(std::log(0.1)));

  const DriftEstimate d = drift_mc(t, config(DriftMode::stein, 256, 0.0), 0.0, vec({10.0}), normals(1, 256, 3));
  CHECK(d.degenerate);
  CHECK(d.value[0] == 0.0);
}

TEST_CASE("epsilon factor matches a direct computation") {
  // Mixture with moderate phi values so that plain arithmetic is safe here.
  const TargetSpec t = make_gaussian_mixture_target({{0.4, vec({-1.0})}, {0.6, vec({1.5})}}, 1.0);
  const double tt = 0.3, y = 0.4, s = std::sqrt(1.0 - tt);
  const Matrix z = normals(1, 512, 21);
  for (DriftMode mode : {DriftMode::gradient_ratio, DriftMode::stein}) {
    for (double eps : {0.05, 0.3, 0.7}) {
      double a = 0.0, b = 0.0;
      for (int j = 0; j < 512; ++j) {
        const double u = y + s * z(0, j);
        const double phi = 0.4 * std::exp(-u - 0.5) + 0.6 * std::exp(1.5 * u - 1.125);
        const double g = (-0.4 * std::exp(-u - 0.5) + 0.9 * std::exp(1.5 * u - 1.125)) / phi;
        b += phi / 512.0;
        a += (mode == DriftMode::gradient_ratio ? phi * g : phi * z(0, j) / s) / 512.0;
      }
      const double expected = (1.0 - eps) * a / ((1.0 - eps) * b + eps);
      const DriftEstimate e = drift_mc(t, config(mode, 512, eps), tt, vec({y}), z);
      CHECK(e.value[0] == doctest::Approx(expected).epsilon(1e-12));
      CHECK(e.log_denominator == doctest::Approx(std::log((1.0 - eps) * b + eps)).epsilon(1e-12));
    }
  }
}

TEST_CASE("effective sample size fraction") {
  const TargetSpec t = make_gaussian_mixture_target({{0.5, vec({-2.0})}, {0.5, vec({2.0})}}, 1.0);
  const Matrix z = normals(1, 300, 4);
  const DriftEstimate e = drift_mc(t, config(DriftMode::stein, 300), 0.2, vec({0.5}), z);
  const double s = std::sqrt(0.8);
  std::vector<double> l(300);
  double lmax = -1e300;
  for (int j = 0; j < 300; ++j) {
    const double u = 0.5 + s * z(0, j);
    l[j] = std::log(std::cosh(2.0 * u)) - 2.0;
    lmax = std::max(lmax, l[j]);
  }
  double sw = 0.0, sw2 = 0.0;
  for (double v : l) {
    sw += std::exp(v - lmax);
    sw2 += std::exp(2.0 * (v - lmax));
  }
  CHECK(e.ess_fraction == doctest::Approx(sw * sw / (300.0 * sw2)).epsilon(1e-12));
  CHECK(e.ess_fraction > 0.0);
  CHECK(e.ess_fraction <= 1.0);
}

TEST_CASE("terminal drift") {
  SUBCASE("phi == 1") {
    CHECK(drift_terminal(make_standard_target(3, 1.0), DriftConfig{}, vec({1.0, -2.0, 0.5})).value.norm() == 0.0);
  }
  SUBCASE("narrow Gaussian, against a finite difference of log phi") {
    const TargetSpec t = make_gaussian_target({vec({0.0}), 0.25}, 1.0);
    const double fd = (log_phi(t, vec({1.0 + 1e-6})) - log_phi(t, vec({1.0 - 1e-6}))) / 2e-6;
    const DriftEstimate e = drift_terminal(t, DriftConfig{}, vec({1.0}));
    CHECK(e.value[0] == doctest::Approx(-3.0).epsilon(1e-12));
    CHECK(e.value[0] == doctest::Approx(fd).epsilon(1e-6));
  }
  SUBCASE("compact support with and without epsilon") {
    const TargetSpec t = make_triangular_kde_target({{0.0}, 1.0}, 1.0);
    DriftConfig c;
    c.epsilon = 0.1;
    const DriftEstimate e = drift_terminal(t, c, vec({3.0}));
    CHECK(e.value[0] == 0.0);
    CHECK_FALSE(e.degenerate);
    const DriftEstimate d = drift_terminal(t, DriftConfig{}, vec({3.0}));
    CHECK(d.degenerate);
    CHECK(d.value[0] == 0.0);
  }
  SUBCASE("epsilon form by direct arithmetic") {
    const TargetSpec t = make_triangular_kde_target({{0.0}, 1.0}, 1.0);
    DriftConfig c;
    c.epsilon = 0.2;
    const double phi = 0.5 * std::exp(0.125) * std::sqrt(2.0 * std::numbers::pi);
    // d/dx log phi at 0.5 = -1/(1 - 0.5) + 0.5 = -1.5
    const double expected = 0.8 * phi * -1.5 / (0.8 * phi + 0.2);
    CHECK(drift_terminal(t, c, vec({0.5})).value[0] == doctest::Approx(expected).epsilon(1e-13));
  }
  SUBCASE("policy and gradient requirements") {
    DriftConfig c;
    c.terminal_policy = TerminalPolicy::last_interior;
    CHECK_THROWS_AS(drift_terminal(make_standard_target(1, 1.0), c, vec({0.0})), UsageError);
    TargetSpec no_grad = make_standard_target(1, 1.0);
    no_grad.grad_log_rho = nullptr;
    no_grad.grad_log_rho_batch = nullptr;
    CHECK_THROWS_AS(drift_terminal(no_grad, DriftConfig{}, vec({0.0})), UsageError);
  }
}

TEST_CASE("closed-form Gaussian drift") {
  const GaussianParams p{vec({1.5, -0.5}), 2.0};
  SUBCASE("variance T is constant m/T") {
    for (double t : {0.0, 0.7, 1.9})
      for (double y : {-2.0, 0.0, 3.0}) {
        const Vector b = drift_exact_gaussian(p, 2.0, t, vec({y, -y}));
        CHECK(b[0] == doctest::Approx(0.75));
        CHECK(b[1] == doctest::Approx(-0.25));
      }
  }
  SUBCASE("narrow Gaussian at t = 0, y = 1") {
    CHECK(drift_exact_gaussian({vec({0.0}), 0.25}, 1.0, 0.0, vec({1.0}))[0] == doctest::Approx(-0.75).epsilon(1e-15));
  }
  SUBCASE("t = T equals the terminal drift") {
    for (double s2 : {0.25, 1.0, 4.0}) {
      const TargetSpec t = make_gaussian_target({vec({0.3}), s2}, 1.0);
      for (double y : {-1.0, 0.2, 2.0})
        CHECK(drift_exact_gaussian({vec({0.3}), s2}, 1.0, 1.0, vec({y}))[0] ==
              doctest::Approx(drift_terminal(t, DriftConfig{}, vec({y})).value[0]).epsilon(1e-12));
    }
  }
  SUBCASE("mixture closed form against the finite difference of log h") {
    // h(t, y) = sum_k w_k exp(m_k y / T - m_k^2/(2T) + m_k^2 (T - t)/(2T^2))
    const GaussianMixtureParams mp{{{0.3, vec({-1.0})}, {0.7, vec({2.0})}}};
    auto log_h = [](double t, double y) {
      return std::log(0.3 * std::exp(-y - 0.5 + 0.5 * (1.0 - t)) + 0.7 * std::exp(2.0 * y - 2.0 + 2.0 * (1.0 - t)));
    };
    for (double t : {0.0, 0.5, 1.0})
      for (double y : {-1.0, 0.0, 0.8}) {
        const double fd = (log_h(t, y + 1e-6) - log_h(t, y - 1e-6)) / 2e-6;
        CHECK(drift_exact_mixture(mp, 1.0, t, vec({y}))[0] == doctest::Approx(fd).epsilon(1e-7));
      }
  }
  CHECK_THROWS_AS(drift_exact(make_triangular_kde_target({{0.0}, 1.0}, 1.0), 0.0, vec({0.0})), UsageError);
}

TEST_CASE("epsilon drift bound") {
  CHECK(drift_bound_epsilon(1.0, 0.5) == doctest::Approx(3.0));
  CHECK(drift_bound_epsilon(1.0, 1.0 - 1e-12) == doctest::Approx(2.0));
  CHECK(drift_bound_epsilon(2.0, 0.1) == doctest::Approx(22.0));
  CHECK_THROWS_AS(drift_bound_epsilon(0.0, 0.5), UsageError);
  CHECK_THROWS_AS(drift_bound_epsilon(1.0, 0.0), UsageError);
}

TEST_CASE("preconditions") {
  const TargetSpec t = make_standard_target(1, 1.0);
  CHECK_THROWS_AS(drift_mc(t, config(DriftMode::gradient_ratio, 8), 1.0, vec({0.0}), normals(1, 8, 1)), UsageError);
  CHECK_THROWS_AS(drift_mc(t, config(DriftMode::gradient_ratio, 8), -0.1, vec({0.0}), normals(1, 8, 1)), UsageError);
  CHECK_THROWS_AS(drift_mc(t, config(DriftMode::gradient_ratio, 8), 0.5, vec({0.0}), normals(1, 7, 1)), UsageError);
  CHECK_THROWS_AS(drift_mc(t, config(DriftMode::exact_gaussian, 8), 0.5, vec({0.0}), normals(1, 8, 1)), UsageError);
  CHECK_THROWS_AS(drift_mc(t, config(DriftMode::gradient_ratio, 8), 0.5, vec({0.0, 1.0}), normals(1, 8, 1)), UsageError);
  TargetSpec no_grad = t;
  no_grad.grad_log_rho = nullptr;
  no_grad.grad_log_rho_batch = nullptr;
  CHECK_THROWS_AS(drift_mc(no_grad, config(DriftMode::gradient_ratio, 8), 0.5, vec({0.0}), normals(1, 8, 1)), UsageError);
  CHECK_NOTHROW(drift_mc(no_grad, config(DriftMode::stein, 8), 0.5, vec({0.0}), normals(1, 8, 1)));
  DriftConfig bad;
  bad.mc_batch = 0;
  CHECK_THROWS_AS(validate(bad), UsageError);
  bad = DriftConfig{};
  bad.epsilon = 1.0;
  CHECK_THROWS_AS(validate(bad), UsageError);
  bad = DriftConfig{};
  bad.clamp = 0.0;
  CHECK_THROWS_AS(validate(bad), UsageError);
  CHECK_THROWS_AS(drift_mc(with_log_offset(t, 1.0), config(DriftMode::stein, 8, 0.1), 0.5, vec({0.0}), normals(1, 8, 1)),
                  UsageError);
}

TEST_CASE("clamp") {
  const TargetSpec t = make_gaussian_target({vec({0.0}), 0.01}, 1.0);
  DriftConfig c = config(DriftMode::gradient_ratio, 64);
  c.clamp = 2.0;
  const DriftEstimate e = drift_mc(t, c, 0.9, vec({3.0}), normals(1, 64, 2));
  CHECK(e.clamped);
  CHECK(std::abs(e.value[0]) == doctest::Approx(2.0));
  Vector v = vec({3.0, 4.0});
  CHECK(apply_clamp(v, 1.0));
  CHECK(v.norm() == doctest::Approx(1.0));
  CHECK_FALSE(apply_clamp(v, std::nullopt));

  CHECK_FALSE(default_clamp(make_standard_target(1, 1.0), 0.0));
  CHECK_FALSE(default_clamp(make_triangular_kde_target({{0.0}, 1.0}, 1.0), 0.1));
  REQUIRE(default_clamp(make_triangular_kde_target({{0.0}, 1.0}, 1.0), 0.0));
  CHECK(*default_clamp(make_triangular_kde_target({{0.0}, 1.0}, 1.0), 0.0) == 1e4);
}

TEST_CASE("a constant shift of log rho leaves the estimate bit-identical") {
  const TargetSpec base = make_gaussian_mixture_target({{0.3, vec({-1.0, 0.5})}, {0.7, vec({2.0, 0.0})}}, 1.0);
  const TargetSpec shifted = with_log_offset(base, 3.0);
  for (DriftMode mode : {DriftMode::gradient_ratio, DriftMode::stein}) {
    for (int i = 0; i < 20; ++i) {
      const Matrix z = normals(2, 256, 50 + i);
      const Vector y = normals(2, 1, 500 + i).col(0);
      const double t = 0.04 * i;
      const DriftEstimate a = drift_mc(base, config(mode, 256), t, y, z);
      const DriftEstimate b = drift_mc(shifted, config(mode, 256), t, y, z);
      CHECK(a.value == b.value);
      CHECK(a.std_error == b.std_error);
    }
  }
}

TEST_CASE("gradient ratio and Stein estimators agree in expectation") {
  const TargetSpec t = make_gaussian_mixture_target({{0.5, vec({-2.0})}, {0.5, vec({2.0})}}, 1.0);
  const int m = 4096, batches = 50;
  for (auto [tt, y] : {std::pair{0.2, 0.7}, std::pair{0.6, -1.1}}) {
    std::vector<double> gr, st;
    for (int b = 0; b < batches; ++b) {
      gr.push_back(drift_mc(t, config(DriftMode::gradient_ratio, m), tt, vec({y}), normals(1, m, 7000 + b)).value[0]);
      st.push_back(drift_mc(t, config(DriftMode::stein, m), tt, vec({y}), normals(1, m, 9000 + b)).value[0]);
    }
    auto mean_var = [](const std::vector<double>& v) {
      double m1 = 0.0, m2 = 0.0;
      for (double x : v) m1 += x / v.size();
      for (double x : v) m2 += (x - m1) * (x - m1) / (v.size() - 1);
      return std::pair{m1, m2};
    };
    const auto [ma, va] = mean_var(gr);
    const auto [mb, vb] = mean_var(st);
    const double se = std::sqrt(va / batches + vb / batches);
    CHECK(std::abs(ma - mb) < 6.0 * se);
    CHECK(ma == doctest::Approx(drift_exact(t, tt, vec({y}))[0]).epsilon(0.01));
  }
}

TEST_CASE("gradient ratio drift just before T approaches the terminal drift") {
  const int m = 1 << 14;
  const std::vector<TargetSpec> targets{make_gaussian_target({vec({0.5}), 0.25}, 1.0),
                                        make_gaussian_mixture_target({{0.5, vec({-2.0})}, {0.5, vec({2.0})}}, 1.0)};
  for (const TargetSpec& t : targets) {
    for (int i = 0; i < 10; ++i) {
      const double y = -2.0 + 0.4 * i;
      const DriftEstimate e = drift_mc(t, config(DriftMode::gradient_ratio, m), 1.0 - 1e-6, vec({y}), normals(1, m, 300 + i));
      const double terminal = drift_terminal(t, DriftConfig{}, vec({y})).value[0];
      CHECK(std::abs(e.value[0] - terminal) <= 5.0 * e.std_error[0] + 1e-12);
    }
  }
}
