#include "qcd/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace qcd {

namespace {

constexpr double kCarryThreshold = 1e100;
constexpr std::size_t kBatchCap = 4096;

// log(1 + e^y) without overflow.
double softplus(double y) {
  if (y > 0.0) return y + std::log1p(std::exp(-y));
  return std::log1p(std::exp(y));
}

void check_log_ratio(double log_ratio) {
  if (!std::isfinite(log_ratio))
    throw std::invalid_argument("statistic update: log ratio must be finite");
}

void check_rho(double rho) {
  if (!(rho >= 0.0 && rho < 1.0))
    throw std::invalid_argument("statistic: rho must lie in [0,1)");
}

}  // namespace

std::string stat_kind_name(StatKind kind) {
  switch (kind) {
    case StatKind::Shiryaev: return "shiryaev";
    case StatKind::ShiryaevRoberts: return "shiryaev-roberts";
    case StatKind::Cusum: return "cusum";
  }
  throw std::invalid_argument("stat_kind_name: unknown kind");
}

StatKind stat_kind_from_name(const std::string& name) {
  if (name == "shiryaev") return StatKind::Shiryaev;
  if (name == "shiryaev-roberts") return StatKind::ShiryaevRoberts;
  if (name == "cusum") return StatKind::Cusum;
  throw std::invalid_argument("unknown statistic kind: " + name);
}

StatisticState::StatisticState(StatKind kind, double rho) : kind_(kind), rho_(rho) {
  check_rho(rho);
  if (kind != StatKind::Shiryaev && rho != 0.0)
    throw std::invalid_argument("statistic: only the Shiryaev kind takes a prior rho");
}

void StatisticState::update(double log_ratio) {
  check_log_ratio(log_ratio);
  if (kind_ == StatKind::Cusum) {
    linear_ = std::max(0.0, linear_ + log_ratio);
    return;
  }
  const double log_decay = std::log1p(-rho_);  // log(1 - rho), 0 for SR
  if (!log_mode_) {
    const double next = (1.0 + linear_) * std::exp(log_ratio - log_decay);
    if (std::isfinite(next) && next <= kCarryThreshold) {
      linear_ = next;
      return;
    }
    // Crossed into carry mode: redo this step on log(1 + S).
    log1p_s_ = std::log1p(linear_);
    log_mode_ = true;
  }
  const double log_s = log1p_s_ - log_decay + log_ratio;  // log of the new S
  log1p_s_ = softplus(log_s);
}

double StatisticState::value() const {
  if (kind_ == StatKind::Cusum) return linear_;
  return log_mode_ ? std::expm1(log1p_s_) : linear_;
}

double StatisticState::comparable() const {
  if (kind_ == StatKind::Cusum) return linear_;
  return log_mode_ ? log1p_s_ : std::log1p(linear_);
}

double StatisticState::comparable_threshold(StatKind kind, double threshold) {
  if (kind == StatKind::Cusum) return threshold;
  if (!(threshold >= 0.0))
    throw std::invalid_argument("ratio statistics need a nonnegative threshold");
  return std::log1p(threshold);
}

bool StatisticState::exceeds(double threshold) const {
  return comparable() > comparable_threshold(kind_, threshold);
}

void StatisticState::reset() {
  linear_ = 0.0;
  log1p_s_ = 0.0;
  log_mode_ = false;
}

void shiryaev_update(StatisticState& state, double ratio) {
  if (state.kind() != StatKind::Shiryaev)
    throw std::invalid_argument("shiryaev_update: wrong statistic kind");
  if (!(ratio > 0.0) || !std::isfinite(ratio))
    throw std::invalid_argument("shiryaev_update: ratio must be positive and finite");
  state.update(std::log(ratio));
}

void shiryaev_roberts_update(StatisticState& state, double ratio) {
  if (state.kind() != StatKind::ShiryaevRoberts)
    throw std::invalid_argument("shiryaev_roberts_update: wrong statistic kind");
  if (!(ratio > 0.0) || !std::isfinite(ratio))
    throw std::invalid_argument("shiryaev_roberts_update: ratio must be positive and finite");
  state.update(std::log(ratio));
}

void cusum_update(StatisticState& state, double log_ratio) {
  if (state.kind() != StatKind::Cusum)
    throw std::invalid_argument("cusum_update: wrong statistic kind");
  state.update(log_ratio);
}

double shiryaev_batch(std::span<const double> ratios, double rho) {
  check_rho(rho);
  const std::size_t n = ratios.size();
  if (n > kBatchCap) throw std::invalid_argument("shiryaev_batch: input longer than 4096");
  for (double r : ratios)
    if (!(r > 0.0) || !std::isfinite(r))
      throw std::invalid_argument("shiryaev_batch: ratios must be positive and finite");
  if (n == 0) return 0.0;
  const double log_decay = std::log1p(-rho);
  // Literal translation of the sum-of-products form, one term per start
  // index k, combined by log-sum-exp.
  std::vector<double> terms(n);
  for (std::size_t k = 0; k < n; ++k) {
    double acc = static_cast<double>(k) * log_decay - static_cast<double>(n) * log_decay;
    for (std::size_t t = k; t < n; ++t) acc += std::log(ratios[t]);
    terms[k] = acc;
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - m);
  return std::exp(m) * sum;
}

double cusum_batch(std::span<const double> log_ratios) {
  const std::size_t n = log_ratios.size();
  if (n > kBatchCap) throw std::invalid_argument("cusum_batch: input longer than 4096");
  for (double l : log_ratios) check_log_ratio(l);
  double best = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t t = k; t < n; ++t) acc += log_ratios[t];
    best = std::max(best, acc);
  }
  return best;
}

double threshold_from_alpha(StatKind kind, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("threshold_from_alpha: alpha must lie in (0,1)");
  if (kind != StatKind::Shiryaev)
    throw std::invalid_argument(
        "threshold_from_alpha: no finite-sample threshold rule for " + stat_kind_name(kind));
  return (1.0 - alpha) / alpha;
}

}  // namespace qcd
