#include "qcd/posterior.hpp"

#include <cmath>
#include <stdexcept>

namespace qcd {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSqrt3 = 1.7320508075688772935;

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("alpha must lie in the open interval (0,1)");
}

}  // namespace

PriorSpec PriorSpec::geometric(double rho, double alpha) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("PriorSpec::geometric: rho must lie in (0,1)");
  check_alpha(alpha);
  PriorSpec p;
  p.rho = rho;
  p.d = -std::log1p(-rho);
  p.alpha = alpha;
  p.b_alpha = (1.0 - alpha) / alpha;
  return p;
}

PriorSpec PriorSpec::none(double alpha) {
  check_alpha(alpha);
  PriorSpec p;
  p.rho = 0.0;
  p.d = 0.0;
  p.alpha = alpha;
  p.b_alpha = (1.0 - alpha) / alpha;
  return p;
}

LogisticPosterior build_posterior(double n, double alpha, double kl_estimate, double d) {
  check_alpha(alpha);
  if (!std::isfinite(kl_estimate) || !std::isfinite(d))
    throw std::invalid_argument("build_posterior: kl_estimate and d must be finite");
  double q = kl_estimate + d;
  if (q < kKlFloor) q = kKlFloor;
  const double abs_log_alpha = -std::log(alpha);
  LogisticPosterior post;
  post.mu = n - abs_log_alpha / q;
  post.s = kSqrt3 * abs_log_alpha / (kPi * q);
  return post;
}

double pre_weight(const LogisticPosterior& post, double t, double delta) {
  if (!(post.s > 0.0)) throw std::invalid_argument("pre_weight: posterior scale must be positive");
  return stable_sigmoid(-(t - delta - post.mu) / post.s);
}

double post_weight(const LogisticPosterior& post, double t) {
  if (!(post.s > 0.0)) throw std::invalid_argument("post_weight: posterior scale must be positive");
  return stable_sigmoid((t - post.mu) / post.s);
}

}  // namespace qcd
