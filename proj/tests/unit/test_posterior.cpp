#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "qcd/posterior.hpp"

using namespace qcd;

TEST_CASE("posterior location and scale follow the closed form") {
  // q = kl + d = |log(0.01)| / 2, so the mean sits exactly 2 steps back.
  const double q = std::log(100.0) / 2.0;
  const LogisticPosterior p = build_posterior(100.0, 0.01, q, 0.0);
  CHECK(p.mu == doctest::Approx(98.0).epsilon(1e-12));
  CHECK(p.s == doctest::Approx(std::sqrt(3.0) * std::log(100.0) / (M_PI * q)).epsilon(1e-12));

  // The prior exponent enters additively.
  const LogisticPosterior p2 = build_posterior(100.0, 0.01, q / 2.0, q / 2.0);
  CHECK(p2.mu == doctest::Approx(p.mu).epsilon(1e-12));
  CHECK(p2.s == doctest::Approx(p.s).epsilon(1e-12));
}

TEST_CASE("degenerate divergence estimates are floored") {
  const LogisticPosterior a = build_posterior(50.0, 0.05, 0.0, 0.0);
  const LogisticPosterior b = build_posterior(50.0, 0.05, -3.0, 0.0);  // negative estimate
  CHECK(a.mu == b.mu);
  CHECK(a.s == b.s);
  CHECK(std::isfinite(a.mu));
  CHECK(a.s > 0.0);
  // The floored posterior sits exactly |log alpha| / kKlFloor steps back.
  CHECK(a.mu == doctest::Approx(50.0 - std::log(20.0) / kKlFloor).epsilon(1e-12));
}

TEST_CASE("pre and post weights are exactly complementary at delta 0") {
  const LogisticPosterior p = build_posterior(200.0, 0.01, 0.4, 0.0);
  for (double t = -50.0; t <= 450.0; t += 0.7) {
    const double sum = pre_weight(p, t, 0.0) + post_weight(p, t);
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("weights are monotone in time and in the shift") {
  const LogisticPosterior p = build_posterior(100.0, 0.01, 0.5, 0.0);
  double prev_post = -1.0, prev_pre = 2.0;
  for (double t = 0.0; t <= 200.0; t += 1.0) {
    const double w1 = post_weight(p, t);
    const double w0 = pre_weight(p, t, 0.0);
    CHECK(w1 >= prev_post);
    CHECK(w0 <= prev_pre);
    prev_post = w1;
    prev_pre = w0;
  }
  double prev = -1.0;
  for (double delta = 0.0; delta <= 60.0; delta += 1.0) {
    const double w0 = pre_weight(p, 120.0, delta);
    CHECK(w0 >= prev);
    prev = w0;
  }
}

TEST_CASE("the shift acts as a pure translation of the pre weight") {
  const LogisticPosterior p = build_posterior(80.0, 0.02, 0.3, 0.005);
  for (double t = 0.0; t <= 160.0; t += 3.0)
    for (double delta : {0.0, 1.0, 7.0, 25.0})
      CHECK(pre_weight(p, t, delta) == doctest::Approx(pre_weight(p, t - delta, 0.0)).epsilon(1e-14));
}

TEST_CASE("weight cdf is centred at mu with logistic quartiles") {
  const LogisticPosterior p = build_posterior(150.0, 0.01, 0.6, 0.0);
  CHECK(post_weight(p, p.mu) == doctest::Approx(0.5).epsilon(1e-12));
  // Symmetry pins the mean; the ln 3 quartile offset pins the scale.
  for (double a : {0.5, 2.0, 5.0, 11.0})
    CHECK(post_weight(p, p.mu + a) + post_weight(p, p.mu - a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(post_weight(p, p.mu + p.s * std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("prior bookkeeping") {
  const PriorSpec g = PriorSpec::geometric(0.005, 0.01);
  CHECK(g.rho == 0.005);
  CHECK(g.d == doctest::Approx(-std::log1p(-0.005)).epsilon(1e-15));
  CHECK(g.b_alpha == doctest::Approx(99.0).epsilon(1e-12));
  const PriorSpec n = PriorSpec::none(0.01);
  CHECK(n.d == 0.0);
  CHECK(n.rho == 0.0);
}

TEST_CASE("invalid error levels are rejected") {
  CHECK_THROWS_AS(build_posterior(10.0, 0.0, 0.1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_posterior(10.0, 1.0, 0.1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_posterior(10.0, -0.2, 0.1, 0.0), std::invalid_argument);
}
