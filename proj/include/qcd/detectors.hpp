#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qcd/kernels.hpp"
#include "qcd/posterior.hpp"
#include "qcd/rng.hpp"
#include "qcd/simulation.hpp"
#include "qcd/statistics.hpp"

namespace qcd {

// Link g applied to the likelihood ratio inside the weighted objective.
// All three induce the same stationary points; they differ in how hard
// large ratios pull on the gradients.
//   kl:    g(x) = log x
//   sqrt:  g(x) = sqrt(x) - 1
//   xlogx: g(x) = (x - 1) log x
enum class LossKind { Kl, Sqrt, XLogX };

std::string loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);

struct TwrConfig {
  int n_epochs = 25;
  int batch_size = 32;       // effective batch is min(batch_size, t)
  double step_size = 1e-3;   // constant SGD step
  double grad_clip = 10.0;   // gradient norm clip
  double penalty_c = 0.1;    // subtracts c / max(kl, kKlFloor) from the LLR
  double anneal_eps = 0.01;  // p0 decrement per annealing event
  double l_min = -1.5;       // floor on the penalized LLR, must be negative
  double alpha = 0.01;       // error level driving the posterior width
  PriorSpec prior = PriorSpec::none(0.01);
  StatKind statistic = StatKind::Cusum;
  int kl_window = 64;  // divergence estimated on the last kl_window states
  LossKind loss = LossKind::Kl;
  bool annealing = true;  // when false, delta stays 0 and p0 stays 1

  void validate() const;
};

// Everything one step reports; detectors fill the fields that apply to them
// and leave the rest NaN.
struct StepInfo {
  double comparable = 0.0;  // statistic on the overflow-safe comparison scale
  double stat_value = 0.0;  // statistic in its native domain
  double l_raw = std::numeric_limits<double>::quiet_NaN();
  double l_pen = std::numeric_limits<double>::quiet_NaN();
  double kl = std::numeric_limits<double>::quiet_NaN();
  double mu = std::numeric_limits<double>::quiet_NaN();
  double s = std::numeric_limits<double>::quiet_NaN();
  double p0 = std::numeric_limits<double>::quiet_NaN();
  double d_bar = std::numeric_limits<double>::quiet_NaN();
  long delta = 0;
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::string name() const = 0;
  virtual StatKind stat_kind() const = 0;
  // Captures the conditioning state at time 0; must be called before step().
  virtual void begin(const std::vector<double>& init_state) = 0;
  virtual StepInfo step(std::span<const double> x, Rng& rng) = 0;
};

// Gradients of sum_j w0[j] g(r_j) with respect to theta0 and of
// sum_j w1[j] g(r_j) with respect to theta1, where r_j is the likelihood
// ratio f_theta1 / f_theta0 at transition j. Returns false (leaving the
// outputs unspecified) if anything non-finite shows up, so callers can skip
// the epoch instead of poisoning the parameters.
bool twr_loss_grads(const KernelFamily& family, std::span<const double> theta0,
                    std::span<const double> theta1, std::span<const double> states_flat,
                    std::span<const double> next_flat, std::span<const long> indices,
                    std::span<const double> w0, std::span<const double> w1, LossKind loss,
                    std::span<double> g0_out, std::span<double> g1_out);

// Change detector that learns both segment parameters online. Each step it
// appends the new transition, runs n_epochs weighted SGD passes (descending
// the pre-change objective on theta0 with probability p0, ascending the
// post-change objective on theta1), then pushes the penalized LLR of the
// newest transition into the statistic. A divergence-vs-running-mean test
// drives the annealing bookkeeping (delta shift and p0 decay).
class TwrDetector : public Detector {
 public:
  TwrDetector(const KernelFamily& family, TwrConfig cfg, std::vector<double> theta0_init,
              std::vector<double> theta1_init);

  std::string name() const override { return "twr"; }
  StatKind stat_kind() const override { return cfg_.statistic; }
  void begin(const std::vector<double>& init_state) override;
  StepInfo step(std::span<const double> x, Rng& rng) override;

  // Multi-change handoff: statistic, annealing state and buffers restart at
  // the detection time and theta0 adopts the learned post-change parameter.
  void reset_for_next_change();

  const std::vector<double>& theta0() const { return theta0_; }
  const std::vector<double>& theta1() const { return theta1_; }
  long t() const { return t_; }
  long delta() const { return delta_; }
  double p0() const { return p0_; }
  double d_bar() const { return d_bar_; }
  long skipped_epochs() const { return skipped_epochs_; }

 private:
  const KernelFamily* family_;
  TwrConfig cfg_;
  std::vector<double> theta0_, theta1_;
  StatisticState stat_;
  long delta_ = 0;
  double p0_ = 1.0;
  double d_bar_ = 0.0;
  long t_ = 0;
  std::vector<double> states_, next_;                 // flattened transition buffer
  std::vector<std::vector<double>> kl_base_;          // last kl_window conditioning states
  std::vector<double> cur_state_;
  long skipped_epochs_ = 0;  // diagnostic: epochs dropped on non-finite gradients

  void append_transition(std::span<const double> x);
};

// Clairvoyant reference: both parameters known, exact LLR per transition.
class OracleDetector : public Detector {
 public:
  OracleDetector(const KernelFamily& family, std::vector<double> theta0, std::vector<double> theta1,
                 StatKind statistic, double rho = 0.0);

  std::string name() const override { return "oracle"; }
  StatKind stat_kind() const override { return stat_.kind(); }
  void begin(const std::vector<double>& init_state) override;
  StepInfo step(std::span<const double> x, Rng& rng) override;

 private:
  const KernelFamily* family_;
  std::vector<double> theta0_, theta1_;
  StatisticState stat_;
  std::vector<double> cur_state_;
};

struct AdaptiveConfig {
  int n_epochs = 25;
  int batch_size = 8;
  double step_size = 3e-2;
  double grad_clip = 10.0;
  StatKind statistic = StatKind::Cusum;
  double rho = 0.0;  // only used by the Shiryaev statistic
};

// Pre-change parameter fixed up front (fitted on historical data or given);
// post-change parameter chased by unweighted stochastic MLE ascent over the
// whole buffer. No penalization: this is the baseline whose pre-change LLR
// creeps back to zero as theta1 relearns the pre-change law.
class AdaptiveDetector : public Detector {
 public:
  AdaptiveDetector(const KernelFamily& family, AdaptiveConfig cfg, std::vector<double> theta0,
                   std::vector<double> theta1_init);

  std::string name() const override { return "adaptive"; }
  StatKind stat_kind() const override { return stat_.kind(); }
  void begin(const std::vector<double>& init_state) override;
  StepInfo step(std::span<const double> x, Rng& rng) override;

  const std::vector<double>& theta1() const { return theta1_; }

 private:
  const KernelFamily* family_;
  AdaptiveConfig cfg_;
  std::vector<double> theta0_, theta1_;
  StatisticState stat_;
  long t_ = 0;
  std::vector<double> states_, next_;
  std::vector<double> cur_state_;
  long skipped_epochs_ = 0;
};

// Stochastic-gradient maximum likelihood over transitions [t_begin, t_end)
// of a flattened buffer; ascends the mean log density. Used for adaptive
// pre-fits and the GLR sups on families without closed-form MLEs.
void sgd_mle_fit(const KernelFamily& family, std::span<const double> states_flat,
                 std::span<const double> next_flat, long n, long t_begin, long t_end, int epochs,
                 int batch_size, double step_size, double grad_clip, Rng& rng,
                 std::vector<double>& theta);

struct GlrConfig {
  long stride = 5;        // candidate split spacing
  int fit_epochs = 20;    // SGD budget when a sup is first fitted
  int refresh_epochs = 2; // SGD budget per refresh of a warm sup
  long refresh_every = 10; // refresh cadence per candidate (1 = every step)
  int batch_size = 16;
  double step_size = 2e-2;
  double grad_clip = 10.0;
};

// Generalized likelihood ratio detector: at each n it scores every
// stride-spaced split k by
//   sup_pre log-lik[0,k) + sup_post log-lik[k,n) - sup log-lik[0,n)
// and takes the max over k, floored at 0. Sups are exact for
// iid-gaussian-mean (segment means via prefix sums); other families use
// warm-started SGD fits with the configured epoch budgets. Quadratic in the
// stream length by construction.
class GlrDetector : public Detector {
 public:
  GlrDetector(const KernelFamily& family, GlrConfig cfg);

  std::string name() const override { return "glr"; }
  StatKind stat_kind() const override { return StatKind::Cusum; }  // log-domain comparisons
  void begin(const std::vector<double>& init_state) override;
  StepInfo step(std::span<const double> x, Rng& rng) override;

 private:
  struct Candidate {
    long k;
    std::vector<double> theta_pre, theta_post;
    double pre_loglik = 0.0;   // frozen: sup over [0, k)
    double post_loglik = 0.0;  // rolling: sum over [k, n) at theta_post
  };

  const KernelFamily* family_;
  GlrConfig cfg_;
  long t_ = 0;
  std::vector<double> states_, next_;
  std::vector<double> cur_state_;
  std::vector<Candidate> cands_;
  std::vector<double> theta_global_;
  double global_loglik_ = 0.0;
  double stat_ = 0.0;
  bool closed_form_ = false;
  // prefix sums for the closed-form path
  std::vector<double> prefix_sum_;    // per-dim running sums of observations
  std::vector<double> prefix_sumsq_;  // running sum of |x|^2
  std::vector<double> prefix_rows_;   // flattened per-t prefix of sums (t+1 rows)

  double segment_loglik(std::span<const double> theta, long t_begin, long t_end) const;
  double closed_form_stat() const;
  void append_transition(std::span<const double> x);
};

struct TraceRow {
  long t = 0;
  std::string detector;
  double s_value = 0.0;
  double l_raw = 0.0, l_pen = 0.0, kl = 0.0;
  long delta = 0;
  double p0 = 0.0, d_bar = 0.0, mu = 0.0, s = 0.0;
  bool fired = false;
};

struct RunResult {
  bool fired = false;
  long nu = -1;       // first-passage step (1-based), -1 if censored
  long horizon = 0;
  double threshold = 0.0;
  std::vector<double> comparable_path;  // per-step statistic when requested
  std::vector<TraceRow> trace;          // per-step trace when requested
};

// Drives a detector over transitions 1..horizon of the trajectory, stopping
// at the first statistic value strictly above the threshold. Pass an
// infinite threshold (and keep_path) to scan the whole horizon and read off
// stopping times for every threshold afterwards via first_passage().
RunResult run_detector(Detector& det, const Trajectory& traj, double threshold, long horizon,
                       Rng& rng, bool keep_trace = false, bool keep_path = false);

// First index (1-based) whose comparable value crosses the threshold, or -1.
long first_passage(const std::vector<double>& comparable_path, StatKind kind, double threshold);

}  // namespace qcd
