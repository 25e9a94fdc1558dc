#include "qcd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

namespace qcd {

namespace {

MeanEstimate mean_of(const std::vector<double>& xs) {
  MeanEstimate m;
  m.n = static_cast<long>(xs.size());
  if (m.n == 0) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.value = sum / m.n;
  if (m.n > 1) {
    double sq = 0.0;
    for (double x : xs) sq += (x - m.value) * (x - m.value);
    m.se = std::sqrt(sq / (m.n - 1)) / std::sqrt(static_cast<double>(m.n));
  }
  return m;
}

}  // namespace

nlohmann::json TrialRecord::to_json() const {
  nlohmann::json j{{"detector", detector}, {"threshold", threshold}, {"trial", trial},
                   {"seed", seed},         {"fired", fired},         {"nu", nu},
                   {"horizon", horizon},   {"has_oracle", has_oracle}};
  if (std::isfinite(lambda)) j["lambda"] = lambda;  // absent field marks a no-change stream
  if (has_oracle) {
    j["oracle_fired"] = oracle_fired;
    j["oracle_nu"] = oracle_nu;
  }
  return j;
}

TrialRecord TrialRecord::from_json(const nlohmann::json& j) {
  TrialRecord r;
  r.detector = j.at("detector").get<std::string>();
  r.threshold = j.at("threshold").get<double>();
  r.trial = j.at("trial").get<long>();
  r.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("lambda") && !j.at("lambda").is_null()) r.lambda = j.at("lambda").get<double>();
  r.fired = j.at("fired").get<bool>();
  r.nu = j.at("nu").get<long>();
  r.horizon = j.at("horizon").get<long>();
  r.has_oracle = j.at("has_oracle").get<bool>();
  if (r.has_oracle) {
    r.oracle_fired = j.at("oracle_fired").get<bool>();
    r.oracle_nu = j.at("oracle_nu").get<long>();
  }
  return r;
}

MeanEstimate estimate_pfa(std::span<const TrialRecord> records) {
  if (records.empty()) throw UndefinedResult("estimate_pfa: no records");
  long alarms = 0;
  for (const auto& r : records)
    if (r.fired && static_cast<double>(r.nu) < r.lambda) ++alarms;
  MeanEstimate m;
  m.n = static_cast<long>(records.size());
  m.value = static_cast<double>(alarms) / m.n;
  m.se = std::sqrt(m.value * (1.0 - m.value) / m.n);
  return m;
}

DelayEstimate estimate_add(std::span<const TrialRecord> records) {
  std::vector<double> delays;
  long censored = 0;
  for (const auto& r : records) {
    if (!r.fired) {
      ++censored;
      continue;
    }
    if (std::isfinite(r.lambda) && static_cast<double>(r.nu) >= r.lambda)
      delays.push_back(static_cast<double>(r.nu) - r.lambda);
  }
  if (delays.empty()) throw UndefinedResult("estimate_add: no qualifying trials");
  const MeanEstimate m = mean_of(delays);
  return DelayEstimate{m.value, m.se, m.n, censored};
}

FarEstimate estimate_far(std::span<const TrialRecord> records) {
  if (records.empty()) throw UndefinedResult("estimate_far: no records");
  std::vector<double> stops;
  long censored = 0;
  for (const auto& r : records) {
    if (r.fired) {
      stops.push_back(static_cast<double>(r.nu));
    } else {
      stops.push_back(static_cast<double>(r.horizon));
      ++censored;
    }
  }
  const MeanEstimate m = mean_of(stops);
  if (!(m.value > 0.0)) throw UndefinedResult("estimate_far: mean stopping time is zero");
  FarEstimate f;
  f.value = 1.0 / m.value;
  f.se = m.se / (m.value * m.value);  // delta method on the reciprocal
  f.n = m.n;
  f.censored_fraction = static_cast<double>(censored) / m.n;
  f.upper_bound = censored > 0;
  return f;
}

DelayEstimate estimate_cadd(std::span<const TrialRecord> records) {
  std::map<double, std::vector<double>> groups;
  long censored = 0;
  for (const auto& r : records) {
    if (!std::isfinite(r.lambda)) continue;
    if (!r.fired) {
      ++censored;
      continue;
    }
    if (static_cast<double>(r.nu) >= r.lambda)
      groups[r.lambda].push_back(static_cast<double>(r.nu) - r.lambda);
  }
  DelayEstimate best;
  bool found = false;
  for (const auto& [lambda, delays] : groups) {
    if (delays.empty()) continue;
    const MeanEstimate m = mean_of(delays);
    if (!found || m.value > best.value) {
      best = DelayEstimate{m.value, m.se, m.n, censored};
      found = true;
    }
  }
  if (!found) throw UndefinedResult("estimate_cadd: no qualifying group");
  return best;
}

DelayEstimate estimate_regret(std::span<const TrialRecord> records) {
  std::vector<double> excess;
  long censored = 0;
  for (const auto& r : records) {
    if (!r.has_oracle || !r.oracle_fired) continue;
    if (!std::isfinite(r.lambda) || static_cast<double>(r.oracle_nu) < r.lambda) continue;
    if (!r.fired) {
      ++censored;  // oracle qualified but the detector never fired
      continue;
    }
    if (r.nu >= r.oracle_nu)
      excess.push_back(std::max(0.0, static_cast<double>(r.nu - r.oracle_nu)));
  }
  if (excess.empty()) throw UndefinedResult("estimate_regret: no qualifying pairs");
  const MeanEstimate m = mean_of(excess);
  return DelayEstimate{m.value, m.se, m.n, censored};
}

}  // namespace qcd
