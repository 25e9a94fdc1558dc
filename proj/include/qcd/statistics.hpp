#pragma once

#include <span>
#include <string>

namespace qcd {

enum class StatKind { Shiryaev, ShiryaevRoberts, Cusum };

std::string stat_kind_name(StatKind kind);
StatKind stat_kind_from_name(const std::string& name);

// One-step detection statistic. Shiryaev and Shiryaev-Roberts live in the
// likelihood-ratio domain (value >= 0, multiplicative updates); CuSum lives
// in the log domain (value >= 0, additive updates). The Shiryaev value is
// kept linear until it crosses 1e100, after which the state carries
// log(1 + S) so threshold sweeps up to 1e50 and beyond never overflow.
class StatisticState {
 public:
  explicit StatisticState(StatKind kind, double rho = 0.0);

  StatKind kind() const { return kind_; }
  double rho() const { return rho_; }

  // Applies one observation's log likelihood ratio. CuSum adds it; the ratio
  // statistics multiply by its exponential.
  void update(double log_ratio);

  // Current statistic in its native domain (may be +inf for a Shiryaev value
  // that outgrew double range; use comparable() for threshold tests).
  double value() const;

  // Monotone transform of value() that never overflows: the CuSum value
  // itself, or log1p(S) for the ratio statistics. Compare against
  // comparable_threshold(kind, B) for first-passage tests.
  double comparable() const;
  static double comparable_threshold(StatKind kind, double threshold);
  bool exceeds(double threshold) const;

  void reset();

 private:
  StatKind kind_;
  double rho_ = 0.0;
  double linear_ = 0.0;   // ratio-domain value while it fits
  double log1p_s_ = 0.0;  // log(1 + S) once in carry mode
  bool log_mode_ = false;
};

// Named single-step updates matching the recursion definitions; `ratio` is
// the plain likelihood ratio (must be positive and finite).
void shiryaev_update(StatisticState& state, double ratio);
void shiryaev_roberts_update(StatisticState& state, double ratio);
void cusum_update(StatisticState& state, double log_ratio);

// Direct batch translations of the statistics' closed forms, used as
// independent oracles for the recursions. Both are deliberately quadratic;
// inputs are capped at 4096 entries to keep that affordable.
//   shiryaev_batch: (1-rho)^-n * sum_k (1-rho)^(k-1) * prod_{t=k..n} R_t
//   cusum_batch:    max(0, max_k sum_{t=k..n} log R_t)
double shiryaev_batch(std::span<const double> ratios, double rho);
double cusum_batch(std::span<const double> log_ratios);

// (1 - alpha) / alpha for the Shiryaev statistic; the other kinds have no
// finite-sample threshold rule and raise an error.
double threshold_from_alpha(StatKind kind, double alpha);

}  // namespace qcd
