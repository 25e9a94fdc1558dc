#pragma once

namespace qcd {

// Closed-form surrogate for the change-point posterior: a logistic
// distribution whose mean sits one expected detection delay behind the
// current time and whose spread matches the delay's variance. Weighting
// losses by its tail probabilities splits a stream into soft pre- and
// post-change halves without storing the full posterior.
struct LogisticPosterior {
  double mu = 0.0;
  double s = 1.0;  // scale, strictly positive
};

// Prior bookkeeping shared by detectors: geometric change-point prior with
// parameter rho, its tail exponent d = -log(1 - rho), the error level alpha
// and the matching Shiryaev threshold (1 - alpha) / alpha.
struct PriorSpec {
  double rho = 0.0;
  double d = 0.0;
  double alpha = 0.01;
  double b_alpha = 99.0;

  static PriorSpec geometric(double rho, double alpha);
  // No prior (CuSum-style min-max setting): d = 0.
  static PriorSpec none(double alpha);
};

// Floor applied to kl_estimate + d so the posterior stays proper when the
// estimated divergence collapses. An estimate this small carries no
// localization signal, and letting it through would blow the scale up until
// every weight in a finite window is indistinguishable from its far-field
// limit; the floor caps the scale so the weights keep a usable slope.
inline constexpr double kKlFloor = 1e-2;

// Posterior at time n for error level alpha, given the current divergence
// estimate and prior exponent d:
//   mu = n - |log alpha| / max(kl_estimate + d, kKlFloor)
//   s  = sqrt(3) |log alpha| / (pi * max(kl_estimate + d, kKlFloor))
LogisticPosterior build_posterior(double n, double alpha, double kl_estimate, double d);

// P(change > t - delta): survival weight used for the pre-change objective.
// Nonincreasing in t, nondecreasing in delta.
double pre_weight(const LogisticPosterior& post, double t, double delta);

// P(change < t): cdf weight used for the post-change objective.
double post_weight(const LogisticPosterior& post, double t);

}  // namespace qcd
