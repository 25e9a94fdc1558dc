#include "qcd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <utility>

#include "qcd/csv.hpp"
#include "qcd/simulation.hpp"
#include "qcd/statistics.hpp"
#include "qcd/svg.hpp"
#include "qcd/trial_runner.hpp"

namespace qcd {
namespace {

namespace fs = std::filesystem;

// Seed derivation tags. Every random decision in a run is keyed by
// (master_seed, trial, purpose) so any single trial reproduces in isolation
// and worker count cannot change any output byte.
constexpr std::uint64_t kTagFamily = 0x66616d696c79ULL;
constexpr std::uint64_t kTagPair = 0x70616972ULL;
constexpr std::uint64_t kTagLambda = 0x6c616d626461ULL;
constexpr std::uint64_t kTagTraj = 0x7472616aULL;
constexpr std::uint64_t kTagFar = 0x666172ULL;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const double kNan = std::numeric_limits<double>::quiet_NaN();
const double kInf = std::numeric_limits<double>::infinity();

nlohmann::json prior_to_json(const PriorSpec& p) {
  if (p.rho > 0.0) return {{"kind", "geometric"}, {"rho", p.rho}};
  return {{"kind", "none"}};
}

PriorSpec prior_from_json(const nlohmann::json& j, double alpha) {
  const std::string kind = j.value("kind", std::string("none"));
  if (kind == "geometric") return PriorSpec::geometric(j.at("rho").get<double>(), alpha);
  if (kind == "none") return PriorSpec::none(alpha);
  throw ConfigError("unknown prior kind: " + kind);
}

nlohmann::json twr_to_json(const TwrConfig& c) {
  return {{"n_epochs", c.n_epochs},
          {"batch_size", c.batch_size},
          {"step_size", c.step_size},
          {"grad_clip", c.grad_clip},
          {"penalty_c", c.penalty_c},
          {"anneal_eps", c.anneal_eps},
          {"l_min", c.l_min},
          {"alpha", c.alpha},
          {"prior", prior_to_json(c.prior)},
          {"statistic", stat_kind_name(c.statistic)},
          {"kl_window", c.kl_window},
          {"loss", loss_kind_name(c.loss)},
          {"annealing", c.annealing}};
}

TwrConfig twr_from_json(const nlohmann::json& j) {
  TwrConfig c;
  c.n_epochs = j.value("n_epochs", c.n_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.step_size = j.value("step_size", c.step_size);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.penalty_c = j.value("penalty_c", c.penalty_c);
  c.anneal_eps = j.value("anneal_eps", c.anneal_eps);
  c.l_min = j.value("l_min", c.l_min);
  c.alpha = j.value("alpha", c.alpha);
  c.prior = j.contains("prior") ? prior_from_json(j.at("prior"), c.alpha) : PriorSpec::none(c.alpha);
  if (j.contains("statistic")) c.statistic = stat_kind_from_name(j.at("statistic").get<std::string>());
  c.kl_window = j.value("kl_window", c.kl_window);
  if (j.contains("loss")) c.loss = loss_kind_from_name(j.at("loss").get<std::string>());
  c.annealing = j.value("annealing", c.annealing);
  return c;
}

nlohmann::json adaptive_to_json(const AdaptiveConfig& c) {
  return {{"n_epochs", c.n_epochs},     {"batch_size", c.batch_size},
          {"step_size", c.step_size},   {"grad_clip", c.grad_clip},
          {"statistic", stat_kind_name(c.statistic)}, {"rho", c.rho}};
}

AdaptiveConfig adaptive_from_json(const nlohmann::json& j) {
  AdaptiveConfig c;
  c.n_epochs = j.value("n_epochs", c.n_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.step_size = j.value("step_size", c.step_size);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  if (j.contains("statistic")) c.statistic = stat_kind_from_name(j.at("statistic").get<std::string>());
  c.rho = j.value("rho", c.rho);
  return c;
}

nlohmann::json glr_to_json(const GlrConfig& c) {
  return {{"stride", c.stride},
          {"fit_epochs", c.fit_epochs},
          {"refresh_epochs", c.refresh_epochs},
          {"refresh_every", c.refresh_every},
          {"batch_size", c.batch_size},
          {"step_size", c.step_size},
          {"grad_clip", c.grad_clip}};
}

GlrConfig glr_from_json(const nlohmann::json& j) {
  GlrConfig c;
  c.stride = j.value("stride", c.stride);
  c.fit_epochs = j.value("fit_epochs", c.fit_epochs);
  c.refresh_epochs = j.value("refresh_epochs", c.refresh_epochs);
  c.refresh_every = j.value("refresh_every", c.refresh_every);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.step_size = j.value("step_size", c.step_size);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  return c;
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

nlohmann::json DetectorSpec::to_json() const {
  nlohmann::json j{{"type", type}, {"name", name}};
  if (type == "twr") j["twr"] = twr_to_json(twr);
  if (type == "adaptive") {
    j["adaptive"] = adaptive_to_json(adaptive);
    j["pre_fraction"] = adaptive_pre_fraction;
    j["pretrain_epochs"] = adaptive_pretrain_epochs;
  }
  if (type == "glr") j["glr"] = glr_to_json(glr);
  if (type == "oracle") {
    j["statistic"] = stat_kind_name(statistic);
    j["rho"] = rho;
  }
  return j;
}

DetectorSpec DetectorSpec::from_json(const nlohmann::json& j) {
  DetectorSpec d;
  d.type = j.at("type").get<std::string>();
  d.name = j.value("name", d.type);
  if (j.contains("twr")) d.twr = twr_from_json(j.at("twr"));
  if (j.contains("adaptive")) d.adaptive = adaptive_from_json(j.at("adaptive"));
  d.adaptive_pre_fraction = j.value("pre_fraction", d.adaptive_pre_fraction);
  d.adaptive_pretrain_epochs = j.value("pretrain_epochs", d.adaptive_pretrain_epochs);
  if (j.contains("glr")) d.glr = glr_from_json(j.at("glr"));
  if (j.contains("statistic")) d.statistic = stat_kind_from_name(j.at("statistic").get<std::string>());
  d.rho = j.value("rho", d.rho);
  return d;
}

nlohmann::json MultiChangeSpec::to_json() const {
  return {{"change_points", change_points}, {"threshold", threshold}};
}

MultiChangeSpec MultiChangeSpec::from_json(const nlohmann::json& j) {
  MultiChangeSpec m;
  m.change_points = j.at("change_points").get<std::vector<long>>();
  m.threshold = j.at("threshold").get<double>();
  return m;
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  if (lambda < 1) throw ConfigError("lambda must be at least 1");
  if (!(lambda_rho >= 0.0 && lambda_rho < 1.0)) throw ConfigError("lambda_rho must lie in [0, 1)");
  if (!(target_kl > 0.0)) throw ConfigError("target_kl must be positive");
  if (!(kl_tol > 0.0 && kl_tol < 1.0)) throw ConfigError("kl_tol must lie in (0, 1)");
  if (n_base_states < 1) throw ConfigError("n_base_states must be at least 1");
  if (burn_in < 0) throw ConfigError("burn_in must be nonnegative");
  if (thresholds.empty()) throw ConfigError("threshold grid is empty");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0) || !std::isfinite(thresholds[i]))
      throw ConfigError("thresholds must be positive and finite");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1]))
      throw ConfigError("thresholds must be strictly ascending");
  }
  if (detectors.empty()) throw ConfigError("at least one detector is required");
  std::map<std::string, int> seen;
  for (const DetectorSpec& d : detectors) {
    if (d.name.empty()) throw ConfigError("detector name must be nonempty");
    if (++seen[d.name] > 1) throw ConfigError("duplicate detector name: " + d.name);
    if (d.type == "twr") {
      try {
        d.twr.validate();
      } catch (const std::exception& e) {
        throw ConfigError("detector '" + d.name + "': " + e.what());
      }
    } else if (d.type == "adaptive") {
      if (d.adaptive.n_epochs < 1) throw ConfigError("adaptive n_epochs must be at least 1");
      if (d.adaptive.batch_size < 1) throw ConfigError("adaptive batch_size must be at least 1");
      if (!(d.adaptive.step_size > 0.0)) throw ConfigError("adaptive step_size must be positive");
      if (!(d.adaptive.grad_clip > 0.0)) throw ConfigError("adaptive grad_clip must be positive");
      if (!(d.adaptive_pre_fraction > 0.0 && d.adaptive_pre_fraction <= 1.0))
        throw ConfigError("pre_fraction must lie in (0, 1]");
      if (d.adaptive_pretrain_epochs < 0) throw ConfigError("pretrain_epochs must be nonnegative");
    } else if (d.type == "glr") {
      if (d.glr.stride < 1) throw ConfigError("glr stride must be at least 1");
      if (d.glr.fit_epochs < 0 || d.glr.refresh_epochs < 0)
        throw ConfigError("glr epoch budgets must be nonnegative");
      if (d.glr.refresh_every < 1) throw ConfigError("glr refresh_every must be at least 1");
      if (d.glr.batch_size < 1) throw ConfigError("glr batch_size must be at least 1");
      if (!(d.glr.step_size > 0.0)) throw ConfigError("glr step_size must be positive");
      if (!(d.glr.grad_clip > 0.0)) throw ConfigError("glr grad_clip must be positive");
    } else if (d.type == "oracle") {
      if (!(d.rho >= 0.0 && d.rho < 1.0)) throw ConfigError("oracle rho must lie in [0, 1)");
    } else {
      throw ConfigError("unknown detector type: " + d.type);
    }
  }
  if (far_trials < 0) throw ConfigError("far_trials must be nonnegative");
  if (far_trials > 0 && far_horizon < 1)
    throw ConfigError("far_horizon must be positive when far_trials > 0");
  if (trace_trials < 0) throw ConfigError("trace_trials must be nonnegative");
  if (workers < 0) throw ConfigError("workers must be nonnegative");
  if (multi) {
    if (multi->change_points.empty()) throw ConfigError("multi change_points is empty");
    long prev = 1;
    for (long cp : multi->change_points) {
      if (cp <= prev) throw ConfigError("multi change_points must be strictly ascending and >= 2");
      if (cp > horizon) throw ConfigError("multi change_points must not exceed the horizon");
      prev = cp;
    }
    if (!(multi->threshold > 0.0)) throw ConfigError("multi threshold must be positive");
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j{{"family", family.to_json()},
                   {"per_trial_family_seed", per_trial_family_seed},
                   {"target_kl", target_kl},
                   {"kl_tol", kl_tol},
                   {"n_base_states", n_base_states},
                   {"trials", trials},
                   {"horizon", horizon},
                   {"lambda", lambda},
                   {"lambda_rho", lambda_rho},
                   {"burn_in", burn_in},
                   {"thresholds", nlohmann::json{{"values", thresholds}}},
                   {"far_trials", far_trials},
                   {"far_horizon", far_horizon},
                   {"master_seed", master_seed}};
  nlohmann::json dets = nlohmann::json::array();
  for (const DetectorSpec& d : detectors) dets.push_back(d.to_json());
  j["detectors"] = std::move(dets);
  if (multi) j["multi"] = multi->to_json();
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  try {
    ExperimentConfig c;
    if (j.contains("family")) c.family = FamilyConfig::from_json(j.at("family"));
    c.per_trial_family_seed = j.value("per_trial_family_seed", c.per_trial_family_seed);
    c.target_kl = j.value("target_kl", c.target_kl);
    c.kl_tol = j.value("kl_tol", c.kl_tol);
    c.n_base_states = j.value("n_base_states", c.n_base_states);
    c.trials = j.value("trials", c.trials);
    c.horizon = j.value("horizon", c.horizon);
    c.lambda = j.value("lambda", c.lambda);
    c.lambda_rho = j.value("lambda_rho", c.lambda_rho);
    c.burn_in = j.value("burn_in", c.burn_in);
    if (j.contains("thresholds")) {
      const nlohmann::json& t = j.at("thresholds");
      if (t.is_array()) {
        c.thresholds = t.get<std::vector<double>>();
      } else if (t.contains("values")) {
        c.thresholds = t.at("values").get<std::vector<double>>();
      } else {
        const double lo = t.at("min").get<double>();
        const double hi = t.at("max").get<double>();
        const int count = t.at("count").get<int>();
        if (!(lo > 0.0) || !(hi >= lo) || count < 1)
          throw ConfigError("threshold grid needs 0 < min <= max and count >= 1");
        c.thresholds.clear();
        for (int i = 0; i < count; ++i) {
          const double f = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
          c.thresholds.push_back(std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo))));
        }
      }
    }
    if (j.contains("detectors")) {
      c.detectors.clear();
      for (const nlohmann::json& d : j.at("detectors")) c.detectors.push_back(DetectorSpec::from_json(d));
    }
    c.far_trials = j.value("far_trials", c.far_trials);
    c.far_horizon = j.value("far_horizon", c.far_horizon);
    c.master_seed = j.value("master_seed", c.master_seed);
    if (j.contains("multi")) c.multi = MultiChangeSpec::from_json(j.at("multi"));
    c.emit_traces = j.value("emit_traces", c.emit_traces);
    c.trace_trials = j.value("trace_trials", c.trace_trials);
    c.emit_plots = j.value("emit_plots", c.emit_plots);
    c.workers = j.value("workers", c.workers);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

namespace {

struct TrialTask {
  long trial = 0;  // record index; far streams live at trials + j
  bool far = false;
  std::uint64_t seed = 0;
};

struct TrialOutput {
  std::vector<TrialRecord> records;
  std::vector<std::pair<std::string, std::string>> trace_files;  // (path, content)
};

// Flattens transitions 0..n_pre-1 of a trajectory into the (state, next)
// buffers the SGD fitters consume.
void flatten_prefix(const KernelFamily& family, const Trajectory& traj, long n_pre,
                    std::vector<double>& states, std::vector<double>& next) {
  std::vector<double> state = traj.init_state;
  states.clear();
  next.clear();
  states.reserve(n_pre * family.state_dim());
  next.reserve(n_pre * family.obs_dim());
  for (long t = 0; t < n_pre; ++t) {
    states.insert(states.end(), state.begin(), state.end());
    const std::vector<double>& x = traj.obs[t + 1];
    next.insert(next.end(), x.begin(), x.end());
    family.push_observation(state, x);
  }
}

std::unique_ptr<Detector> build_detector(const KernelFamily& family, const DetectorSpec& ds,
                                         const PairSample& pair, const Trajectory& traj,
                                         long horizon, double lambda, Rng& rng) {
  const int pd = family.param_dim();
  if (ds.type == "twr") {
    // Equal starting points keep the running-mean divergence clean, so the
    // annealing trigger reacts to the change instead of to an artificial
    // initialization transient (same regime the detector restarts into).
    std::vector<double> th0(pd);
    for (double& v : th0) v = rng.gaussian();
    std::vector<double> th1 = th0;
    return std::make_unique<TwrDetector>(family, ds.twr, std::move(th0), std::move(th1));
  }
  if (ds.type == "oracle")
    return std::make_unique<OracleDetector>(family, pair.theta0, pair.theta1, ds.statistic, ds.rho);
  if (ds.type == "adaptive") {
    // The pre-change parameter is fitted on the leading slice of the same
    // stream, standing in for historical data from the undisturbed system.
    const double span = std::isfinite(lambda) ? std::min(lambda, static_cast<double>(horizon))
                                              : static_cast<double>(horizon);
    const long n_pre = std::clamp<long>(static_cast<long>(ds.adaptive_pre_fraction * span), 1, horizon);
    std::vector<double> states, next;
    flatten_prefix(family, traj, n_pre, states, next);
    std::vector<double> th0(pd);
    for (double& v : th0) v = rng.gaussian();
    sgd_mle_fit(family, states, next, n_pre, 0, n_pre, ds.adaptive_pretrain_epochs,
                ds.adaptive.batch_size, ds.adaptive.step_size, ds.adaptive.grad_clip, rng, th0);
    std::vector<double> th1 = th0;
    return std::make_unique<AdaptiveDetector>(family, ds.adaptive, std::move(th0), std::move(th1));
  }
  if (ds.type == "glr") return std::make_unique<GlrDetector>(family, ds.glr);
  throw ConfigError("unknown detector type: " + ds.type);
}

std::string trace_csv(const RunResult& rr, StatKind kind, double first_threshold) {
  std::string out = "t,detector,s_value,l_raw,l_pen,kl,delta,p0,d_bar,mu,s,fired\n";
  const long nu0 = first_passage(rr.comparable_path, kind, first_threshold);
  for (const TraceRow& r : rr.trace) {
    const bool fired = nu0 > 0 && r.t >= nu0;
    out += format_int(r.t) + ',' + r.detector + ',' + format_double(r.s_value) + ',' +
           format_double(r.l_raw) + ',' + format_double(r.l_pen) + ',' + format_double(r.kl) + ',' +
           format_int(r.delta) + ',' + format_double(r.p0) + ',' + format_double(r.d_bar) + ',' +
           format_double(r.mu) + ',' + format_double(r.s) + ',' + (fired ? '1' : '0') + '\n';
  }
  return out;
}

struct StreamSetup {
  KernelFamily family;
  PairSample pair;
  double lambda = kInf;  // first post-change step; infinite for no-change streams
  long horizon = 0;
  Trajectory traj;
};

StreamSetup build_stream(const ExperimentConfig& cfg, const TrialTask& task) {
  FamilyConfig fcfg = cfg.family;
  if (cfg.per_trial_family_seed) fcfg.seed = mix_seed(task.seed, kTagFamily);
  StreamSetup s{KernelFamily::make(fcfg), {}, kInf, task.far ? cfg.far_horizon : cfg.horizon, {}};

  Rng pair_rng(mix_seed(task.seed, kTagPair));
  s.pair = sample_pair_at_kl(s.family, cfg.target_kl, cfg.kl_tol, pair_rng, cfg.n_base_states,
                             cfg.burn_in);

  ChangeSpec spec;
  spec.horizon = s.horizon;
  spec.x0.assign(s.family.obs_dim(), 0.0);
  spec.burn_in = cfg.burn_in;
  if (task.far) {
    spec.params = {s.pair.theta0};
  } else {
    long lam = cfg.lambda;
    if (cfg.lambda_rho > 0.0) {
      Rng lam_rng(mix_seed(task.seed, kTagLambda));
      lam = sample_change_point(cfg.lambda_rho, lam_rng);
    }
    s.lambda = static_cast<double>(lam);
    if (lam <= 1) {
      spec.params = {s.pair.theta1};  // changed before the first observation
    } else if (lam - 1 < s.horizon) {
      spec.change_points = {lam - 1};
      spec.params = {s.pair.theta0, s.pair.theta1};
    } else {
      spec.params = {s.pair.theta0};  // change beyond the observation window
    }
  }
  Rng traj_rng(mix_seed(task.seed, kTagTraj));
  s.traj = generate(s.family, spec, traj_rng);
  return s;
}

TrialOutput run_one_trial(const ExperimentConfig& cfg, const TrialTask& task,
                          const std::string& out_dir) {
  const StreamSetup s = build_stream(cfg, task);
  const bool want_trace = cfg.emit_traces && !task.far && task.trial < cfg.trace_trials;
  const std::size_t n_det = cfg.detectors.size();
  const std::size_t n_thr = cfg.thresholds.size();

  TrialOutput out;
  std::vector<std::vector<long>> nu(n_det, std::vector<long>(n_thr, -1));
  long oracle_idx = -1;
  for (std::size_t d = 0; d < n_det; ++d) {
    const DetectorSpec& ds = cfg.detectors[d];
    Rng det_rng(mix_seed(task.seed, fnv1a(ds.name)));
    std::unique_ptr<Detector> det = build_detector(s.family, ds, s.pair, s.traj, s.horizon,
                                                   s.lambda, det_rng);
    const RunResult rr = run_detector(*det, s.traj, kInf, s.horizon, det_rng, want_trace, true);
    for (std::size_t b = 0; b < n_thr; ++b)
      nu[d][b] = first_passage(rr.comparable_path, det->stat_kind(), cfg.thresholds[b]);
    if (ds.type == "oracle" && oracle_idx < 0) oracle_idx = static_cast<long>(d);
    if (want_trace)
      out.trace_files.emplace_back(
          out_dir + "/traces/trace_" + ds.name + "_trial" + format_int(task.trial) + ".csv",
          trace_csv(rr, det->stat_kind(), cfg.thresholds.front()));
  }

  out.records.reserve(n_det * n_thr);
  for (std::size_t d = 0; d < n_det; ++d) {
    for (std::size_t b = 0; b < n_thr; ++b) {
      TrialRecord rec;
      rec.detector = cfg.detectors[d].name;
      rec.threshold = cfg.thresholds[b];
      rec.trial = task.trial;
      rec.seed = task.seed;
      rec.lambda = s.lambda;
      rec.nu = nu[d][b];
      rec.fired = rec.nu > 0;
      rec.horizon = s.horizon;
      if (oracle_idx >= 0) {
        rec.has_oracle = true;
        rec.oracle_nu = nu[oracle_idx][b];
        rec.oracle_fired = rec.oracle_nu > 0;
      }
      out.records.push_back(std::move(rec));
    }
  }
  return out;
}

void append_jsonl(std::ofstream& out, const std::vector<TrialRecord>& records) {
  for (const TrialRecord& r : records) out << r.to_json().dump() << '\n';
  out.flush();
}

struct MetricGroup {
  std::vector<TrialRecord> change, far;
};

std::vector<AggregateRow> aggregate_records(const ExperimentConfig& cfg,
                                            const std::vector<TrialRecord>& records) {
  std::map<std::string, std::size_t> det_order;
  for (std::size_t d = 0; d < cfg.detectors.size(); ++d) det_order[cfg.detectors[d].name] = d;
  const std::size_t n_thr = cfg.thresholds.size();
  std::vector<MetricGroup> groups(cfg.detectors.size() * n_thr);
  for (const TrialRecord& r : records) {
    const auto it = det_order.find(r.detector);
    if (it == det_order.end()) continue;
    const auto bt = std::find(cfg.thresholds.begin(), cfg.thresholds.end(), r.threshold);
    if (bt == cfg.thresholds.end()) continue;
    MetricGroup& g = groups[it->second * n_thr + (bt - cfg.thresholds.begin())];
    (r.trial < cfg.trials ? g.change : g.far).push_back(r);
  }

  std::vector<AggregateRow> rows;
  rows.reserve(groups.size());
  for (std::size_t d = 0; d < cfg.detectors.size(); ++d) {
    for (std::size_t b = 0; b < n_thr; ++b) {
      const MetricGroup& g = groups[d * n_thr + b];
      AggregateRow row;
      row.detector = cfg.detectors[d].name;
      row.threshold = cfg.thresholds[b];
      row.n_trials = static_cast<long>(g.change.size());
      for (const TrialRecord& r : g.change)
        if (!r.fired) ++row.n_censored;
      try {
        const MeanEstimate e = estimate_pfa(g.change);
        row.pfa = e.value;
        row.pfa_se = e.se;
      } catch (const UndefinedResult&) {
      }
      try {
        const DelayEstimate e = estimate_add(g.change);
        row.add = e.value;
        row.add_se = e.se;
      } catch (const UndefinedResult&) {
      }
      try {
        const DelayEstimate e = estimate_cadd(g.change);
        row.cadd = e.value;
        row.cadd_se = e.se;
      } catch (const UndefinedResult&) {
      }
      try {
        const DelayEstimate e = estimate_regret(g.change);
        row.regret = e.value;
        row.regret_se = e.se;
      } catch (const UndefinedResult&) {
      }
      if (!g.far.empty()) {
        try {
          const FarEstimate e = estimate_far(g.far);
          row.far = e.value;
          row.far_se = e.se;
        } catch (const UndefinedResult&) {
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out =
      "detector,B,n_trials,n_censored,pfa,add,far,cadd,regret,"
      "pfa_se,add_se,far_se,cadd_se,regret_se\n";
  for (const AggregateRow& r : rows) {
    out += r.detector + ',' + format_double(r.threshold) + ',' + format_int(r.n_trials) + ',' +
           format_int(r.n_censored) + ',' + format_double(r.pfa) + ',' + format_double(r.add) +
           ',' + format_double(r.far) + ',' + format_double(r.cadd) + ',' +
           format_double(r.regret) + ',' + format_double(r.pfa_se) + ',' +
           format_double(r.add_se) + ',' + format_double(r.far_se) + ',' +
           format_double(r.cadd_se) + ',' + format_double(r.regret_se) + '\n';
  }
  return out;
}

void write_metric_plots(const ExperimentConfig& cfg, const std::vector<AggregateRow>& rows,
                        const std::string& out_dir) {
  const auto plot_of = [&](const std::string& title, const std::string& y_label,
                           double AggregateRow::*field) {
    std::vector<PlotSeries> series;
    for (const DetectorSpec& d : cfg.detectors) {
      PlotSeries s{d.name, {}};
      for (const AggregateRow& r : rows)
        if (r.detector == d.name) s.points.emplace_back(r.threshold, r.*field);
      series.push_back(std::move(s));
    }
    return line_chart_svg(title, "threshold", y_label, series, /*log_x=*/true);
  };
  write_text_file(out_dir + "/pfa.svg",
                  plot_of("probability of false alarm", "pfa", &AggregateRow::pfa));
  write_text_file(out_dir + "/add.svg", plot_of("mean detection delay", "add", &AggregateRow::add));
  write_text_file(out_dir + "/cadd.svg",
                  plot_of("worst-case conditional delay", "cadd", &AggregateRow::cadd));
  if (cfg.far_trials > 0)
    write_text_file(out_dir + "/far.svg", plot_of("false alarm rate", "far", &AggregateRow::far));
  bool has_oracle = false;
  for (const DetectorSpec& d : cfg.detectors) has_oracle |= d.type == "oracle";
  if (has_oracle)
    write_text_file(out_dir + "/regret.svg",
                    plot_of("mean delay excess over the oracle", "regret", &AggregateRow::regret));
}

ExperimentResult run_experiment_impl(const ExperimentConfig& cfg, const std::string& out_dir,
                                     bool parallel) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  if (cfg.emit_traces) {
    fs::create_directories(out_dir + "/traces", ec);
    if (ec) throw IoError("cannot create " + out_dir + "/traces: " + ec.message());
  }

  const std::string resolved = cfg.to_json().dump(2) + "\n";
  const std::string resolved_path = out_dir + "/resolved_config.json";
  const std::string records_path = out_dir + "/records.jsonl";
  const long n_cells = cfg.trials + cfg.far_trials;
  const std::size_t per_cell = cfg.detectors.size() * cfg.thresholds.size();

  // A directory written by an identical configuration may be resumed; any
  // trial with a full record set is loaded instead of rerun. Anything else
  // starts fresh.
  std::vector<std::vector<TrialRecord>> loaded(n_cells);
  bool resume = fs::exists(resolved_path) && fs::exists(records_path) &&
                read_text_file(resolved_path) == resolved;
  if (resume) {
    std::istringstream lines(read_text_file(records_path));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      const nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
      if (j.is_discarded()) continue;  // torn tail line from an interrupted run
      try {
        TrialRecord rec = TrialRecord::from_json(j);
        if (rec.trial >= 0 && rec.trial < n_cells) loaded[rec.trial].push_back(std::move(rec));
      } catch (const std::exception&) {
        continue;
      }
    }
  } else {
    write_text_file(resolved_path, resolved);
    write_text_file(records_path, "");
  }
  std::vector<char> complete(n_cells, 0);
  for (long i = 0; i < n_cells; ++i) {
    complete[i] = loaded[i].size() == per_cell;
    if (!complete[i]) loaded[i].clear();
  }

  std::ofstream live(records_path, std::ios::binary | std::ios::app);
  if (!live) throw IoError("cannot open " + records_path + " for appending");
  std::mutex io_mu, err_mu;
  std::exception_ptr first_error;
  std::vector<TrialOutput> fresh(n_cells);

  const auto body = [&](long i) {
    if (complete[i]) return;
    try {
      TrialTask task;
      task.trial = i;
      task.far = i >= cfg.trials;
      task.seed = task.far ? mix_seed(mix_seed(cfg.master_seed, kTagFar), i - cfg.trials)
                           : mix_seed(cfg.master_seed, i);
      TrialOutput out = run_one_trial(cfg, task, out_dir);
      {
        std::lock_guard<std::mutex> lock(io_mu);
        append_jsonl(live, out.records);
        for (const auto& [path, content] : out.trace_files) write_text_file(path, content);
      }
      fresh[i] = std::move(out);
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };
  if (parallel) {
    for_each_index_parallel(n_cells, cfg.workers, body);
  } else {
    for_each_index_serial(n_cells, body);
  }
  if (first_error) std::rethrow_exception(first_error);
  live.close();

  ExperimentResult res;
  res.out_dir = out_dir;
  std::map<std::string, std::size_t> det_order;
  for (std::size_t d = 0; d < cfg.detectors.size(); ++d) det_order[cfg.detectors[d].name] = d;
  for (long i = 0; i < n_cells; ++i) {
    std::vector<TrialRecord>& cell = complete[i] ? loaded[i] : fresh[i].records;
    std::sort(cell.begin(), cell.end(), [&](const TrialRecord& a, const TrialRecord& b) {
      const std::size_t da = det_order.at(a.detector), db = det_order.at(b.detector);
      return da != db ? da < db : a.threshold < b.threshold;
    });
    res.records.insert(res.records.end(), cell.begin(), cell.end());
  }

  // Canonical rewrite: one sorted line per record, so reruns and resumed
  // runs of the same configuration produce identical bytes.
  std::string canonical;
  for (const TrialRecord& r : res.records) {
    canonical += r.to_json().dump();
    canonical += '\n';
  }
  write_text_file(records_path, canonical);

  res.aggregate = aggregate_records(cfg, res.records);
  write_text_file(out_dir + "/aggregate.csv", aggregate_csv(res.aggregate));
  if (cfg.emit_plots) write_metric_plots(cfg, res.aggregate, out_dir);
  return res;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  return run_experiment_impl(cfg, out_dir, /*parallel=*/true);
}

ExperimentResult run_experiment_serial(const ExperimentConfig& cfg, const std::string& out_dir) {
  return run_experiment_impl(cfg, out_dir, /*parallel=*/false);
}

ExperimentResult run_ablation(const ExperimentConfig& cfg, const std::string& out_dir) {
  DetectorSpec proto;
  proto.type = "twr";
  proto.name = "twr";
  for (const DetectorSpec& d : cfg.detectors)
    if (d.type == "twr") {
      proto = d;
      break;
    }
  const double pen_on = proto.twr.penalty_c > 0.0 ? proto.twr.penalty_c : 0.1;

  ExperimentConfig acfg = cfg;
  acfg.detectors.clear();
  const struct {
    const char* name;
    bool anneal, pen;
  } variants[] = {{"twr-anneal-pen", true, true},
                  {"twr-noanneal-pen", false, true},
                  {"twr-anneal-nopen", true, false},
                  {"twr-noanneal-nopen", false, false}};
  for (const auto& v : variants) {
    DetectorSpec d = proto;
    d.name = v.name;
    d.twr.annealing = v.anneal;
    d.twr.penalty_c = v.pen ? pen_on : 0.0;
    acfg.detectors.push_back(std::move(d));
  }
  DetectorSpec oracle;
  oracle.type = "oracle";
  oracle.name = "oracle";
  oracle.statistic = proto.twr.statistic;
  oracle.rho = proto.twr.prior.rho;
  acfg.detectors.push_back(std::move(oracle));

  ExperimentResult res = run_experiment(acfg, out_dir);
  write_text_file(out_dir + "/ablation.csv", aggregate_csv(res.aggregate));
  return res;
}

namespace {

std::vector<std::vector<double>> collect_base_states(const KernelFamily& family,
                                                     std::span<const double> theta, int n,
                                                     int burn_in, Rng& rng) {
  std::vector<double> x0(family.obs_dim(), 0.0);
  std::vector<double> state = family.stationary_warmup(theta, x0, burn_in, rng);
  std::vector<double> x(family.obs_dim());
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.push_back(state);
    family.sample(theta, state, rng, x);
    family.push_observation(state, x);
  }
  return out;
}

struct MultiTrial {
  std::vector<long> alarm_times;
  std::vector<long> matched;  // change index (0-based) per alarm, -1 for false alarms
  std::vector<long> delay;    // per change, -1 when missed
  bool all_in_order = false;
};

}  // namespace

MultiChangeResult run_multi_change(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  if (!cfg.multi) throw ConfigError("multi-change run needs a multi section");
  const DetectorSpec* twr_spec = nullptr;
  for (const DetectorSpec& d : cfg.detectors)
    if (d.type == "twr") {
      twr_spec = &d;
      break;
    }
  if (!twr_spec) throw ConfigError("multi-change run needs a twr detector");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

  const MultiChangeSpec& mc = *cfg.multi;
  const std::size_t n_changes = mc.change_points.size();
  const double cmp_threshold = StatisticState::comparable_threshold(twr_spec->twr.statistic,
                                                                    mc.threshold);

  std::vector<MultiTrial> trials(cfg.trials);
  std::mutex err_mu;
  std::exception_ptr first_error;
  const auto body = [&](long i) {
    try {
      const std::uint64_t seed = mix_seed(cfg.master_seed, i);
      FamilyConfig fcfg = cfg.family;
      if (cfg.per_trial_family_seed) fcfg.seed = mix_seed(seed, kTagFamily);
      const KernelFamily family = KernelFamily::make(fcfg);
      const int pd = family.param_dim();

      // Chain the segment parameters: each sits at the target divergence
      // rate from its predecessor, measured on states warmed under it.
      Rng pair_rng(mix_seed(seed, kTagPair));
      std::vector<std::vector<double>> params(n_changes + 1);
      params[0].resize(pd);
      for (double& v : params[0]) v = pair_rng.gaussian();
      for (std::size_t k = 0; k < n_changes; ++k) {
        const auto base = collect_base_states(family, params[k], cfg.n_base_states, cfg.burn_in,
                                              pair_rng);
        params[k + 1] = sample_shift_at_kl(family, params[k], cfg.target_kl, cfg.kl_tol, pair_rng,
                                           base);
      }

      ChangeSpec spec;
      for (long lam : mc.change_points) spec.change_points.push_back(lam - 1);
      spec.params = params;
      spec.horizon = cfg.horizon;
      spec.x0.assign(family.obs_dim(), 0.0);
      spec.burn_in = cfg.burn_in;
      Rng traj_rng(mix_seed(seed, kTagTraj));
      const Trajectory traj = generate(family, spec, traj_rng);

      Rng det_rng(mix_seed(seed, fnv1a(twr_spec->name)));
      std::vector<double> th0(pd);
      for (double& v : th0) v = det_rng.gaussian();
      std::vector<double> th1 = th0;
      TwrDetector det(family, twr_spec->twr, std::move(th0), std::move(th1));
      det.begin(traj.init_state);

      MultiTrial mt;
      mt.delay.assign(n_changes, -1);
      for (long t = 1; t <= cfg.horizon; ++t) {
        const StepInfo info = det.step(traj.obs[t], det_rng);
        if (info.comparable > cmp_threshold) {
          mt.alarm_times.push_back(t);
          det.reset_for_next_change();
        }
      }
      // Window attribution: alarm in [lambda_k, lambda_{k+1}) catches change
      // k once; anything else is a false alarm.
      std::vector<char> caught(n_changes, 0);
      for (long a : mt.alarm_times) {
        long k = -1;
        for (std::size_t c = 0; c < n_changes; ++c)
          if (a >= mc.change_points[c] &&
              (c + 1 == n_changes || a < mc.change_points[c + 1]))
            k = static_cast<long>(c);
        if (k >= 0 && !caught[k]) {
          caught[k] = 1;
          mt.delay[k] = a - mc.change_points[k];
          mt.matched.push_back(k);
        } else {
          mt.matched.push_back(-1);
        }
      }
      mt.all_in_order = std::all_of(caught.begin(), caught.end(), [](char c) { return c != 0; });
      trials[i] = std::move(mt);
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };
  for_each_index_parallel(cfg.trials, cfg.workers, body);
  if (first_error) std::rethrow_exception(first_error);

  MultiChangeResult res;
  res.n_trials = cfg.trials;
  res.n_changes = static_cast<long>(n_changes);
  res.mean_delay.assign(n_changes, kNan);
  res.detected.assign(n_changes, 0);
  res.missed.assign(n_changes, 0);
  std::vector<double> delay_sum(n_changes, 0.0);
  long in_order = 0;
  std::string detections = "trial,alarm_time,matched_change,delay\n";
  for (long i = 0; i < cfg.trials; ++i) {
    const MultiTrial& mt = trials[i];
    in_order += mt.all_in_order ? 1 : 0;
    for (std::size_t a = 0; a < mt.alarm_times.size(); ++a) {
      const long k = mt.matched[a];
      detections += format_int(i) + ',' + format_int(mt.alarm_times[a]) + ',' +
                    format_int(k + 1) + ',' + format_int(k >= 0 ? mt.delay[k] : -1) + '\n';
      if (k < 0) ++res.false_alarms;
    }
    for (std::size_t k = 0; k < n_changes; ++k) {
      if (mt.delay[k] >= 0) {
        ++res.detected[k];
        delay_sum[k] += static_cast<double>(mt.delay[k]);
      } else {
        ++res.missed[k];
      }
    }
  }
  res.frac_all_in_order = static_cast<double>(in_order) / static_cast<double>(cfg.trials);
  for (std::size_t k = 0; k < n_changes; ++k)
    if (res.detected[k] > 0) res.mean_delay[k] = delay_sum[k] / res.detected[k];

  std::string summary = "change_index,lambda,n_detected,n_missed,mean_delay\n";
  for (std::size_t k = 0; k < n_changes; ++k)
    summary += format_int(static_cast<long>(k) + 1) + ',' + format_int(mc.change_points[k]) + ',' +
               format_int(res.detected[k]) + ',' + format_int(res.missed[k]) + ',' +
               format_double(res.mean_delay[k]) + '\n';
  write_text_file(out_dir + "/multi_detections.csv", detections);
  write_text_file(out_dir + "/multi_summary.csv", summary);
  nlohmann::json j{{"n_trials", res.n_trials},
                   {"n_changes", res.n_changes},
                   {"frac_all_in_order", res.frac_all_in_order},
                   {"false_alarms", res.false_alarms},
                   {"detected", res.detected},
                   {"missed", res.missed}};
  nlohmann::json delays = nlohmann::json::array();
  for (double v : res.mean_delay) delays.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json());
  j["mean_delay"] = std::move(delays);
  write_text_file(out_dir + "/multi_result.json", j.dump(2) + "\n");
  return res;
}

LlrTraceResult run_llr_trace(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  if (cfg.lambda_rho != 0.0) throw ConfigError("llr trace needs a fixed change point");
  const DetectorSpec *oracle_spec = nullptr, *twr_spec = nullptr, *adaptive_spec = nullptr;
  for (const DetectorSpec& d : cfg.detectors) {
    if (d.type == "oracle" && !oracle_spec) oracle_spec = &d;
    if (d.type == "twr" && !twr_spec) twr_spec = &d;
    if (d.type == "adaptive" && !adaptive_spec) adaptive_spec = &d;
  }
  if (!oracle_spec || !twr_spec || !adaptive_spec)
    throw ConfigError("llr trace needs oracle, twr and adaptive detectors");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

  const long T = cfg.horizon;
  struct Slot {
    std::vector<double> oracle_l, twr_raw, twr_pen, adaptive_l;
  };
  std::vector<Slot> slots(cfg.trials);
  std::mutex err_mu;
  std::exception_ptr first_error;
  const auto body = [&](long i) {
    try {
      TrialTask task;
      task.trial = i;
      task.seed = mix_seed(cfg.master_seed, i);
      const StreamSetup s = build_stream(cfg, task);
      Slot& slot = slots[i];
      for (const DetectorSpec* ds : {oracle_spec, twr_spec, adaptive_spec}) {
        Rng det_rng(mix_seed(task.seed, fnv1a(ds->name)));
        std::unique_ptr<Detector> det = build_detector(s.family, *ds, s.pair, s.traj, s.horizon,
                                                       s.lambda, det_rng);
        const RunResult rr = run_detector(*det, s.traj, kInf, s.horizon, det_rng,
                                          /*keep_trace=*/true, /*keep_path=*/false);
        std::vector<double> raw(T), pen(T);
        for (long t = 0; t < T; ++t) {
          raw[t] = rr.trace[t].l_raw;
          pen[t] = rr.trace[t].l_pen;
        }
        if (ds == oracle_spec) slot.oracle_l = std::move(raw);
        if (ds == twr_spec) {
          slot.twr_raw = std::move(raw);
          slot.twr_pen = std::move(pen);
        }
        if (ds == adaptive_spec) slot.adaptive_l = std::move(raw);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };
  for_each_index_parallel(cfg.trials, cfg.workers, body);
  if (first_error) std::rethrow_exception(first_error);

  LlrTraceResult res;
  res.t.resize(T);
  res.oracle_l.assign(T, 0.0);
  res.twr_l_raw.assign(T, 0.0);
  res.twr_l_pen.assign(T, 0.0);
  res.adaptive_l.assign(T, 0.0);
  for (const Slot& slot : slots)
    for (long t = 0; t < T; ++t) {
      res.oracle_l[t] += slot.oracle_l[t];
      res.twr_l_raw[t] += slot.twr_raw[t];
      res.twr_l_pen[t] += slot.twr_pen[t];
      res.adaptive_l[t] += slot.adaptive_l[t];
    }
  for (long t = 0; t < T; ++t) {
    res.t[t] = t + 1;
    res.oracle_l[t] /= cfg.trials;
    res.twr_l_raw[t] /= cfg.trials;
    res.twr_l_pen[t] /= cfg.trials;
    res.adaptive_l[t] /= cfg.trials;
  }

  std::string csv = "t,oracle_l,twr_l_raw,twr_l_pen,adaptive_l\n";
  for (long t = 0; t < T; ++t)
    csv += format_int(res.t[t]) + ',' + format_double(res.oracle_l[t]) + ',' +
           format_double(res.twr_l_raw[t]) + ',' + format_double(res.twr_l_pen[t]) + ',' +
           format_double(res.adaptive_l[t]) + '\n';
  write_text_file(out_dir + "/llr_mean.csv", csv);

  if (cfg.emit_plots) {
    std::vector<PlotSeries> series(4);
    series[0].name = "oracle";
    series[1].name = "twr raw";
    series[2].name = "twr penalized";
    series[3].name = "adaptive";
    for (long t = 0; t < T; ++t) {
      const double x = static_cast<double>(res.t[t]);
      series[0].points.emplace_back(x, res.oracle_l[t]);
      series[1].points.emplace_back(x, res.twr_l_raw[t]);
      series[2].points.emplace_back(x, res.twr_l_pen[t]);
      series[3].points.emplace_back(x, res.adaptive_l[t]);
    }
    write_text_file(out_dir + "/llr_mean.svg",
                    line_chart_svg("mean per-step log likelihood ratio", "t", "mean LLR", series));
  }
  return res;
}

}  // namespace qcd
