#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <doctest.h>

#include "qcd/metrics.hpp"

using namespace qcd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TrialRecord rec(double lambda, bool fired, long nu, long horizon = 100) {
  TrialRecord r;
  r.detector = "d";
  r.threshold = 5.0;
  r.lambda = lambda;
  r.fired = fired;
  r.nu = nu;
  r.horizon = horizon;
  return r;
}

TrialRecord paired(double lambda, bool fired, long nu, bool ofired, long onu) {
  TrialRecord r = rec(lambda, fired, nu);
  r.has_oracle = true;
  r.oracle_fired = ofired;
  r.oracle_nu = onu;
  return r;
}

}  // namespace

TEST_CASE("false alarm probability counts only strictly pre-change stops") {
  std::vector<TrialRecord> rs = {
      rec(10, true, 5),    // alarm
      rec(10, true, 12),   // detection, not an alarm
      rec(10, false, -1),  // censored, no alarm
      rec(10, true, 9),    // alarm
  };
  const MeanEstimate m = estimate_pfa(rs);
  CHECK(m.n == 4);
  CHECK(m.value == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.se == doctest::Approx(0.25).epsilon(1e-12));

  // On a no-change stream every stop is a false alarm.
  std::vector<TrialRecord> far = {rec(kInf, true, 7), rec(kInf, false, -1)};
  CHECK(estimate_pfa(far).value == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("detection delay averages fired post-change stops and counts censoring") {
  std::vector<TrialRecord> rs = {
      rec(10, true, 12),   // delay 2
      rec(10, true, 15),   // delay 5
      rec(10, true, 3),    // pre-change alarm: excluded, not censored
      rec(10, false, -1),  // censored
      rec(kInf, true, 7),  // no change on this stream: excluded
  };
  const DelayEstimate d = estimate_add(rs);
  CHECK(d.n == 2);
  CHECK(d.n_censored == 1);
  CHECK(d.value == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(d.se == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("false alarm rate inverts the mean stopping time") {
  std::vector<TrialRecord> clean = {rec(kInf, true, 20), rec(kInf, true, 30)};
  const FarEstimate f = estimate_far(clean);
  CHECK(f.n == 2);
  CHECK(!f.upper_bound);
  CHECK(f.censored_fraction == 0.0);
  CHECK(f.value == doctest::Approx(1.0 / 25.0).epsilon(1e-12));
  CHECK(f.se == doctest::Approx(5.0 / 625.0).epsilon(1e-12));

  // A censored run contributes its horizon and flags the estimate.
  std::vector<TrialRecord> mixed = {rec(kInf, true, 20), rec(kInf, true, 30),
                                    rec(kInf, false, -1, 50)};
  const FarEstimate g = estimate_far(mixed);
  CHECK(g.upper_bound);
  CHECK(g.censored_fraction == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(g.value == doctest::Approx(3.0 / 100.0).epsilon(1e-12));
}

TEST_CASE("conditional delay takes the worst change-time group") {
  std::vector<TrialRecord> rs = {
      rec(10, true, 12), rec(10, true, 14),  // group mean 3
      rec(30, true, 35), rec(30, true, 39),  // group mean 7 <- worst
      rec(10, false, -1),                    // censored
      rec(kInf, true, 4),                    // no change: ignored entirely
  };
  const DelayEstimate d = estimate_cadd(rs);
  CHECK(d.value == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(d.n == 2);
  CHECK(d.n_censored == 1);
  CHECK(d.se == doctest::Approx(2.0).epsilon(1e-12));

  // One lambda group must agree with the unconditional delay.
  std::vector<TrialRecord> single = {rec(10, true, 12), rec(10, true, 15), rec(10, false, -1)};
  const DelayEstimate a = estimate_add(single);
  const DelayEstimate c = estimate_cadd(single);
  CHECK(c.value == doctest::Approx(a.value).epsilon(1e-12));
  CHECK(c.n == a.n);
  CHECK(c.n_censored == a.n_censored);
}

TEST_CASE("regret averages the excess over the paired oracle") {
  std::vector<TrialRecord> rs = {
      paired(10, true, 15, true, 12),   // excess 3
      paired(10, true, 12, true, 12),   // excess 0
      paired(10, false, -1, true, 13),  // oracle qualified, run censored
      paired(10, true, 20, true, 5),    // oracle alarmed pre-change: pair excluded
      paired(10, true, 11, true, 12),   // run beat the oracle: excluded from the mean
      rec(10, true, 18),                // no oracle attached: excluded
  };
  const DelayEstimate d = estimate_regret(rs);
  CHECK(d.n == 2);
  CHECK(d.n_censored == 1);
  CHECK(d.value == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("the oracle has zero regret against itself") {
  std::vector<TrialRecord> rs;
  for (long i = 0; i < 6; ++i) {
    const long nu = 12 + 2 * i;
    rs.push_back(paired(10, true, nu, true, nu));
  }
  const DelayEstimate d = estimate_regret(rs);
  CHECK(d.value == 0.0);
  CHECK(d.se == 0.0);
  CHECK(d.n == 6);
  CHECK(d.n_censored == 0);
}

TEST_CASE("estimates do not depend on record order") {
  std::vector<TrialRecord> rs = {
      paired(10, true, 12, true, 11), paired(10, true, 19, true, 12),
      paired(30, true, 33, true, 31), paired(10, false, -1, true, 12),
      paired(30, true, 42, true, 33), paired(kInf, true, 25, false, -1),
      paired(kInf, false, -1, false, -1),
  };
  const MeanEstimate pfa0 = estimate_pfa(rs);
  const DelayEstimate add0 = estimate_add(rs);
  const FarEstimate far0 = estimate_far(rs);
  const DelayEstimate cadd0 = estimate_cadd(rs);
  const DelayEstimate reg0 = estimate_regret(rs);

  std::mt19937 gen(7);
  for (int rep = 0; rep < 5; ++rep) {
    std::shuffle(rs.begin(), rs.end(), gen);
    CHECK(estimate_pfa(rs).value == doctest::Approx(pfa0.value).epsilon(1e-12));
    CHECK(estimate_add(rs).value == doctest::Approx(add0.value).epsilon(1e-12));
    CHECK(estimate_far(rs).value == doctest::Approx(far0.value).epsilon(1e-12));
    CHECK(estimate_cadd(rs).value == doctest::Approx(cadd0.value).epsilon(1e-12));
    CHECK(estimate_regret(rs).value == doctest::Approx(reg0.value).epsilon(1e-12));
    CHECK(estimate_add(rs).n_censored == add0.n_censored);
  }
}

TEST_CASE("estimators refuse to produce numbers from nothing") {
  const std::vector<TrialRecord> empty;
  CHECK_THROWS_AS(estimate_pfa(empty), UndefinedResult);
  CHECK_THROWS_AS(estimate_add(empty), UndefinedResult);
  CHECK_THROWS_AS(estimate_far(empty), UndefinedResult);
  CHECK_THROWS_AS(estimate_cadd(empty), UndefinedResult);
  CHECK_THROWS_AS(estimate_regret(empty), UndefinedResult);

  // Records exist but none qualifies.
  std::vector<TrialRecord> no_detect = {rec(10, true, 3), rec(10, false, -1)};
  CHECK_THROWS_AS(estimate_add(no_detect), UndefinedResult);
  CHECK_THROWS_AS(estimate_cadd(no_detect), UndefinedResult);
  CHECK_THROWS_AS(estimate_regret(no_detect), UndefinedResult);
}

TEST_CASE("trial records survive the json round trip") {
  TrialRecord r = paired(42.0, true, 50, true, 44);
  r.detector = "twr";
  r.threshold = 12.5;
  r.trial = 3;
  r.seed = 0xdeadbeefULL;
  r.horizon = 200;
  const nlohmann::json j = r.to_json();
  CHECK(j.at("lambda").get<double>() == 42.0);
  CHECK(j.contains("oracle_nu"));
  const TrialRecord back = TrialRecord::from_json(j);
  CHECK(back.detector == r.detector);
  CHECK(back.threshold == r.threshold);
  CHECK(back.trial == r.trial);
  CHECK(back.seed == r.seed);
  CHECK(back.lambda == r.lambda);
  CHECK(back.fired == r.fired);
  CHECK(back.nu == r.nu);
  CHECK(back.horizon == r.horizon);
  CHECK(back.has_oracle);
  CHECK(back.oracle_fired == r.oracle_fired);
  CHECK(back.oracle_nu == r.oracle_nu);

  // Infinite lambda is encoded by omission; oracle keys only appear when set.
  TrialRecord far = rec(kInf, false, -1);
  const nlohmann::json jf = far.to_json();
  CHECK(!jf.contains("lambda"));
  CHECK(!jf.contains("oracle_nu"));
  const TrialRecord fb = TrialRecord::from_json(jf);
  CHECK(std::isinf(fb.lambda));
  CHECK(!fb.has_oracle);
  CHECK(fb.oracle_nu == -1);
}
