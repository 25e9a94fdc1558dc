#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcd/detectors.hpp"
#include "qcd/kernels.hpp"
#include "qcd/metrics.hpp"

namespace qcd {

// Bad or inconsistent configuration; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem trouble while reading or writing run outputs; CLI exit code 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// One detector entry in a run. `type` picks the algorithm; `name` labels the
// records and must be unique within a run (defaults to the type). Only the
// sub-config matching the type is consulted; `statistic`/`rho` configure the
// oracle, which has no sub-config of its own.
struct DetectorSpec {
  std::string type;  // twr | adaptive | glr | oracle
  std::string name;
  TwrConfig twr;
  AdaptiveConfig adaptive;
  double adaptive_pre_fraction = 0.1;  // share of the stream fitted as pre-change history
  int adaptive_pretrain_epochs = 200;
  GlrConfig glr;
  StatKind statistic = StatKind::Cusum;  // oracle only
  double rho = 0.0;                      // oracle only, Shiryaev statistic parameter

  nlohmann::json to_json() const;
  static DetectorSpec from_json(const nlohmann::json& j);
};

// Multi-change protocol: the stream changes parameter at each listed step
// (index of the first post-change observation) and the detector restarts
// itself after every alarm at the single fixed threshold.
struct MultiChangeSpec {
  std::vector<long> change_points;  // strictly increasing, each in [2, horizon]
  double threshold = 25.0;

  nlohmann::json to_json() const;
  static MultiChangeSpec from_json(const nlohmann::json& j);
};

// Full experiment definition. Per trial the harness draws a fresh parameter
// pair at the target divergence rate, samples one stream, runs every
// configured detector once with an infinite threshold, and reads off the
// stopping time for every grid threshold from the recorded statistic path
// (the detectors' dynamics do not depend on the threshold).
struct ExperimentConfig {
  FamilyConfig family;
  bool per_trial_family_seed = true;  // redraw fixed network weights per trial
  double target_kl = 0.3;
  double kl_tol = 0.05;
  int n_base_states = 64;
  long trials = 50;
  long horizon = 400;
  long lambda = 200;        // first post-change step; > horizon means no change
  double lambda_rho = 0.0;  // > 0 draws lambda geometrically instead
  int burn_in = 200;
  std::vector<double> thresholds;  // ascending grid, resolved from json
  std::vector<DetectorSpec> detectors;
  long far_trials = 0;   // extra streams without a change, for false-alarm rates
  long far_horizon = 0;  // required positive when far_trials > 0
  std::uint64_t master_seed = 1;
  std::optional<MultiChangeSpec> multi;

  // Execution details, deliberately excluded from the resolved dump so they
  // never invalidate a resume or differ between serial and parallel runs.
  bool emit_traces = false;
  int trace_trials = 3;
  bool emit_plots = true;
  int workers = 0;  // 0 = all available

  void validate() const;
  // Canonical resolved form: every definition field explicit, thresholds as
  // a plain list. Byte-compared against resolved_config.json to decide
  // whether an interrupted run in the same directory may be resumed.
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

struct AggregateRow {
  std::string detector;
  double threshold = 0.0;
  long n_trials = 0;    // change-stream records behind the row
  long n_censored = 0;  // of those, runs that never fired
  double pfa = std::numeric_limits<double>::quiet_NaN();
  double add = std::numeric_limits<double>::quiet_NaN();
  double far = std::numeric_limits<double>::quiet_NaN();
  double cadd = std::numeric_limits<double>::quiet_NaN();
  double regret = std::numeric_limits<double>::quiet_NaN();
  double pfa_se = std::numeric_limits<double>::quiet_NaN();
  double add_se = std::numeric_limits<double>::quiet_NaN();
  double far_se = std::numeric_limits<double>::quiet_NaN();
  double cadd_se = std::numeric_limits<double>::quiet_NaN();
  double regret_se = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentResult {
  std::vector<TrialRecord> records;
  std::vector<AggregateRow> aggregate;
  std::string out_dir;
};

// Runs the grid experiment into out_dir: resolved_config.json, records.jsonl
// (appended live, rewritten sorted at the end), aggregate.csv, metric plots,
// and optional per-step trace CSVs. A directory holding a matching
// resolved_config.json is resumed: complete trials are loaded from
// records.jsonl instead of being rerun.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

// Identical semantics and identical output bytes on the serial fallback
// path; kept separate so tests and benchmarks can compare the two.
ExperimentResult run_experiment_serial(const ExperimentConfig& cfg, const std::string& out_dir);

// Reruns the experiment with the first twr entry expanded into its four
// on/off variants (annealing x penalization) plus the oracle, so the two
// mechanisms can be priced separately. Writes the usual outputs plus
// ablation.csv.
ExperimentResult run_ablation(const ExperimentConfig& cfg, const std::string& out_dir);

struct MultiChangeResult {
  long n_trials = 0;
  long n_changes = 0;
  double frac_all_in_order = 0.0;       // trials where every change was caught in its own window
  long false_alarms = 0;                // alarms matched to no undetected change
  std::vector<double> mean_delay;       // per change, over trials that caught it
  std::vector<long> detected;           // per change
  std::vector<long> missed;             // per change
};

// Piecewise-stationary protocol: per trial the segment parameters are
// chained (each at the target divergence from its predecessor), the first
// twr detector runs at the fixed multi threshold and restarts after every
// alarm. Alarms are attributed to the change whose window [lambda_k,
// lambda_{k+1}) they fall in; a window's second alarm, or one before the
// first change, counts as a false alarm. Writes multi_detections.csv,
// multi_summary.csv and multi_result.json.
MultiChangeResult run_multi_change(const ExperimentConfig& cfg, const std::string& out_dir);

struct LlrTraceResult {
  std::vector<long> t;  // 1..horizon
  std::vector<double> oracle_l;
  std::vector<double> twr_l_raw;
  std::vector<double> twr_l_pen;
  std::vector<double> adaptive_l;
};

// Averages the per-step log likelihood ratios of the oracle, twr and
// adaptive detectors across trials at a fixed change point, so the
// post-change drift (and the adaptive baseline's decay back to zero) can be
// seen directly. Requires all three detector types and lambda_rho = 0.
// Writes llr_mean.csv and llr_mean.svg.
LlrTraceResult run_llr_trace(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace qcd
