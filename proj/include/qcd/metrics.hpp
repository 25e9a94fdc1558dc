#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace qcd {

// One detector run on one stream at one threshold. lambda is +infinity for
// streams with no change; a run that reached the horizon without firing has
// fired = false and is treated as censored by the estimators.
struct TrialRecord {
  std::string detector;
  double threshold = 0.0;
  long trial = 0;
  std::uint64_t seed = 0;
  double lambda = std::numeric_limits<double>::infinity();
  bool fired = false;
  long nu = -1;  // first-passage step when fired
  long horizon = 0;
  bool has_oracle = false;  // oracle run available on the same (trial, threshold)
  bool oracle_fired = false;
  long oracle_nu = -1;

  nlohmann::json to_json() const;
  static TrialRecord from_json(const nlohmann::json& j);
};

// Raised when an estimator has no qualifying trials to average over.
struct UndefinedResult : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MeanEstimate {
  double value = 0.0;
  double se = 0.0;  // standard error of the mean
  long n = 0;       // qualifying trials
};

struct DelayEstimate {
  double value = 0.0;
  double se = 0.0;
  long n = 0;           // qualifying trials
  long n_censored = 0;  // runs excluded because they never fired
};

struct FarEstimate {
  double value = 0.0;
  double se = 0.0;
  long n = 0;
  double censored_fraction = 0.0;
  bool upper_bound = false;  // censored runs contributed their horizon
};

// Fraction of trials that alarmed strictly before the change; censored runs
// count as no alarm. Works for random or fixed lambda (read conditionally).
MeanEstimate estimate_pfa(std::span<const TrialRecord> records);

// Mean detection delay nu - lambda over fired runs with nu >= lambda.
DelayEstimate estimate_add(std::span<const TrialRecord> records);

// 1 / mean stopping time; censored runs contribute their horizon, which
// biases the mean low, so the estimate is flagged as an upper bound.
FarEstimate estimate_far(std::span<const TrialRecord> records);

// Worst-case conditional delay: groups records by lambda, averages within
// each group, returns the largest group mean. Needs at least one qualifying
// group; with a single lambda it coincides with estimate_add.
DelayEstimate estimate_cadd(std::span<const TrialRecord> records);

// Mean excess delay over the oracle on paired runs:
// E[nu - oracle_nu | nu >= oracle_nu >= lambda, both fired].
// Runs where the oracle qualified but the detector never fired are censored.
DelayEstimate estimate_regret(std::span<const TrialRecord> records);

}  // namespace qcd
