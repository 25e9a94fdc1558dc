#include "qcd/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qcd {

namespace {

// Floyd's algorithm: m distinct indices from [0, n), consuming exactly m
// draws from the stream.
void sample_indices(long n, int m, Rng& rng, std::vector<long>& out) {
  out.clear();
  for (long j = n - m; j < n; ++j) {
    const long v = static_cast<long>(rng.below(static_cast<std::uint64_t>(j) + 1));
    bool seen = false;
    for (long u : out)
      if (u == v) {
        seen = true;
        break;
      }
    out.push_back(seen ? j : v);
  }
}

void clip_to_norm(std::span<double> g, double max_norm) {
  double n2 = 0.0;
  for (double v : g) n2 += v * v;
  if (n2 > max_norm * max_norm) {
    const double scale = max_norm / std::sqrt(n2);
    for (double& v : g) v *= scale;
  }
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// A batch whose weights sum below this carries no usable signal for that
// objective; normalizing by it would blow the gradient up instead.
constexpr double kWeightMassFloor = 1e-8;

// g'(r) * r expressed through log r: the factor multiplying the score in
// d/dtheta g(r). The exponent is clamped so a wild ratio degrades into a
// large finite pull (the norm clip tames it anyway) instead of an overflow.
double link_slope(LossKind loss, double log_r) {
  const double z = std::clamp(log_r, -40.0, 40.0);
  switch (loss) {
    case LossKind::Kl: return 1.0;
    case LossKind::Sqrt: return 0.5 * std::exp(0.5 * z);
    case LossKind::XLogX: {
      const double r = std::exp(z);
      return r * z + r - 1.0;
    }
  }
  throw std::invalid_argument("link_slope: unknown loss kind");
}

}  // namespace

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::Kl: return "kl";
    case LossKind::Sqrt: return "sqrt";
    case LossKind::XLogX: return "xlogx";
  }
  throw std::invalid_argument("loss_kind_name: unknown kind");
}

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "kl") return LossKind::Kl;
  if (name == "sqrt") return LossKind::Sqrt;
  if (name == "xlogx") return LossKind::XLogX;
  throw std::invalid_argument("unknown loss kind: " + name);
}

void TwrConfig::validate() const {
  if (n_epochs < 0) throw std::invalid_argument("TwrConfig: n_epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("TwrConfig: batch_size must be positive");
  if (!(step_size > 0.0)) throw std::invalid_argument("TwrConfig: step_size must be positive");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("TwrConfig: grad_clip must be positive");
  if (penalty_c < 0.0) throw std::invalid_argument("TwrConfig: penalty_c must be >= 0");
  if (!(anneal_eps >= 0.0 && anneal_eps <= 1.0))
    throw std::invalid_argument("TwrConfig: anneal_eps must lie in [0,1]");
  if (!(l_min < 0.0)) throw std::invalid_argument("TwrConfig: l_min must be negative");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("TwrConfig: alpha must lie in (0,1)");
  if (kl_window < 1) throw std::invalid_argument("TwrConfig: kl_window must be positive");
}

bool twr_loss_grads(const KernelFamily& family, std::span<const double> theta0,
                    std::span<const double> theta1, std::span<const double> states_flat,
                    std::span<const double> next_flat, std::span<const long> indices,
                    std::span<const double> w0, std::span<const double> w1, LossKind loss,
                    std::span<double> g0_out, std::span<double> g1_out) {
  const int pd = family.param_dim();
  const int sd = family.state_dim();
  const int od = family.obs_dim();
  const bool want_g0 = !g0_out.empty();
  if (want_g0 && static_cast<int>(g0_out.size()) != pd)
    throw std::invalid_argument("twr_loss_grads: g0_out has wrong dimension");
  if (static_cast<int>(g1_out.size()) != pd)
    throw std::invalid_argument("twr_loss_grads: g1_out has wrong dimension");
  if (indices.size() != w0.size() || indices.size() != w1.size())
    throw std::invalid_argument("twr_loss_grads: weights must match the index batch");

  static thread_local std::vector<double> score;
  score.resize(pd);
  std::fill(g0_out.begin(), g0_out.end(), 0.0);
  std::fill(g1_out.begin(), g1_out.end(), 0.0);

  for (std::size_t j = 0; j < indices.size(); ++j) {
    const long tau = indices[j];
    const std::span<const double> state(states_flat.data() + tau * sd, static_cast<std::size_t>(sd));
    const std::span<const double> x(next_flat.data() + tau * od, static_cast<std::size_t>(od));
    const double log_r = family.log_density(theta1, state, x) - family.log_density(theta0, state, x);
    if (!std::isfinite(log_r)) return false;
    const double slope = link_slope(loss, log_r);
    if (want_g0) {
      family.grad_log_density(theta0, state, x, score);
      const double a = -w0[j] * slope;
      for (int i = 0; i < pd; ++i) g0_out[i] += a * score[i];
    }
    family.grad_log_density(theta1, state, x, score);
    const double b = w1[j] * slope;
    for (int i = 0; i < pd; ++i) g1_out[i] += b * score[i];
  }
  if (want_g0 && !all_finite(g0_out)) return false;
  return all_finite(g1_out);
}

TwrDetector::TwrDetector(const KernelFamily& family, TwrConfig cfg, std::vector<double> theta0_init,
                         std::vector<double> theta1_init)
    : family_(&family),
      cfg_(cfg),
      theta0_(std::move(theta0_init)),
      theta1_(std::move(theta1_init)),
      stat_(cfg.statistic, cfg.statistic == StatKind::Shiryaev ? cfg.prior.rho : 0.0) {
  cfg_.validate();
  if (static_cast<int>(theta0_.size()) != family.param_dim() ||
      static_cast<int>(theta1_.size()) != family.param_dim())
    throw std::invalid_argument("TwrDetector: parameter initialisation has wrong dimension");
}

void TwrDetector::begin(const std::vector<double>& init_state) {
  if (static_cast<int>(init_state.size()) != family_->state_dim())
    throw std::invalid_argument("TwrDetector::begin: state dimension mismatch");
  cur_state_ = init_state;
  stat_.reset();
  delta_ = 0;
  p0_ = 1.0;
  d_bar_ = 0.0;
  t_ = 0;
  states_.clear();
  next_.clear();
  kl_base_.clear();
  kl_base_.push_back(cur_state_);
  skipped_epochs_ = 0;
}

void TwrDetector::append_transition(std::span<const double> x) {
  states_.insert(states_.end(), cur_state_.begin(), cur_state_.end());
  next_.insert(next_.end(), x.begin(), x.end());
  ++t_;
  family_->push_observation(cur_state_, x);
  kl_base_.push_back(cur_state_);
  if (static_cast<long>(kl_base_.size()) > cfg_.kl_window) kl_base_.erase(kl_base_.begin());
}

StepInfo TwrDetector::step(std::span<const double> x, Rng& rng) {
  if (cur_state_.empty()) throw std::logic_error("TwrDetector::step before begin");
  append_transition(x);

  static thread_local std::vector<long> idx;
  static thread_local std::vector<double> w0, w1, g0, g1;
  const int pd = family_->param_dim();
  const int m = static_cast<int>(std::min<long>(cfg_.batch_size, t_));

  for (int e = 0; e < cfg_.n_epochs; ++e) {
    sample_indices(t_, m, rng, idx);
    const double kl = family_->kl_rate_estimate(theta0_, theta1_, kl_base_);
    const LogisticPosterior post = build_posterior(static_cast<double>(t_), cfg_.alpha, kl, cfg_.prior.d);
    w0.resize(m);
    w1.resize(m);
    for (int j = 0; j < m; ++j) {
      // The shift enlarges theta0's effective window as delta grows, which is
      // self-correcting: a spurious divergence spike hands theta0 more data
      // and pulls the pair back together instead of locking theta0 out.
      w0[j] = pre_weight(post, static_cast<double>(idx[j]), static_cast<double>(delta_));
      w1[j] = post_weight(post, static_cast<double>(idx[j]));
    }
    const bool gate = rng.uniform() < p0_;
    g0.resize(gate ? pd : 0);
    g1.resize(pd);
    const bool ok = twr_loss_grads(*family_, theta0_, theta1_, states_, next_, idx, w0, w1,
                                   cfg_.loss, g0, g1);
    if (!ok) {
      ++skipped_epochs_;
      continue;
    }
    // Each objective is an expectation under its normalized index law, so the
    // raw weighted-sum gradients are rescaled by their batch weight mass.
    // Without this the two parameters train at structurally different rates
    // even when their effective data coincide, which opens a spurious gap.
    double mass0 = 0.0, mass1 = 0.0;
    for (int j = 0; j < m; ++j) {
      mass0 += w0[j];
      mass1 += w1[j];
    }
    if (gate && mass0 > kWeightMassFloor) {
      for (int i = 0; i < pd; ++i) g0[i] /= mass0;
      clip_to_norm(g0, cfg_.grad_clip);
      for (int i = 0; i < pd; ++i) theta0_[i] -= cfg_.step_size * g0[i];
    }
    if (mass1 > kWeightMassFloor) {
      for (int i = 0; i < pd; ++i) g1[i] /= mass1;
      clip_to_norm(g1, cfg_.grad_clip);
      for (int i = 0; i < pd; ++i) theta1_[i] += cfg_.step_size * g1[i];
    }
  }

  const double kl_final = family_->kl_rate_estimate(theta0_, theta1_, kl_base_);
  const std::span<const double> prev_state(states_.data() + (t_ - 1) * family_->state_dim(),
                                           static_cast<std::size_t>(family_->state_dim()));
  const double l_raw =
      family_->log_density(theta1_, prev_state, x) - family_->log_density(theta0_, prev_state, x);
  const double l_pen =
      std::max(l_raw - cfg_.penalty_c / std::max(kl_final, kKlFloor), cfg_.l_min);
  stat_.update(l_pen);

  if (cfg_.annealing && kl_final > d_bar_) {
    ++delta_;
    p0_ = std::max(0.0, p0_ - cfg_.anneal_eps);
  }
  d_bar_ = (static_cast<double>(t_ - 1) * d_bar_ + kl_final) / static_cast<double>(t_);

  const LogisticPosterior post =
      build_posterior(static_cast<double>(t_), cfg_.alpha, kl_final, cfg_.prior.d);
  StepInfo info;
  info.comparable = stat_.comparable();
  info.stat_value = stat_.value();
  info.l_raw = l_raw;
  info.l_pen = l_pen;
  info.kl = kl_final;
  info.mu = post.mu;
  info.s = post.s;
  info.p0 = p0_;
  info.d_bar = d_bar_;
  info.delta = delta_;
  return info;
}

void TwrDetector::reset_for_next_change() {
  stat_.reset();
  delta_ = 0;
  p0_ = 1.0;
  d_bar_ = 0.0;
  t_ = 0;
  states_.clear();
  next_.clear();
  theta0_ = theta1_;  // the learned post-change law becomes the new pre-change law
  kl_base_.clear();
  if (!cur_state_.empty()) kl_base_.push_back(cur_state_);
}

OracleDetector::OracleDetector(const KernelFamily& family, std::vector<double> theta0,
                               std::vector<double> theta1, StatKind statistic, double rho)
    : family_(&family),
      theta0_(std::move(theta0)),
      theta1_(std::move(theta1)),
      stat_(statistic, statistic == StatKind::Shiryaev ? rho : 0.0) {
  if (static_cast<int>(theta0_.size()) != family.param_dim() ||
      static_cast<int>(theta1_.size()) != family.param_dim())
    throw std::invalid_argument("OracleDetector: parameter dimension mismatch");
}

void OracleDetector::begin(const std::vector<double>& init_state) {
  if (static_cast<int>(init_state.size()) != family_->state_dim())
    throw std::invalid_argument("OracleDetector::begin: state dimension mismatch");
  cur_state_ = init_state;
  stat_.reset();
}

StepInfo OracleDetector::step(std::span<const double> x, Rng&) {
  if (cur_state_.empty()) throw std::logic_error("OracleDetector::step before begin");
  const double l =
      family_->log_density(theta1_, cur_state_, x) - family_->log_density(theta0_, cur_state_, x);
  stat_.update(l);
  family_->push_observation(cur_state_, x);
  StepInfo info;
  info.comparable = stat_.comparable();
  info.stat_value = stat_.value();
  info.l_raw = l;
  info.l_pen = l;
  return info;
}

AdaptiveDetector::AdaptiveDetector(const KernelFamily& family, AdaptiveConfig cfg,
                                   std::vector<double> theta0, std::vector<double> theta1_init)
    : family_(&family),
      cfg_(cfg),
      theta0_(std::move(theta0)),
      theta1_(std::move(theta1_init)),
      stat_(cfg.statistic, cfg.statistic == StatKind::Shiryaev ? cfg.rho : 0.0) {
  if (cfg_.n_epochs < 0 || cfg_.batch_size < 1 || !(cfg_.step_size > 0.0) || !(cfg_.grad_clip > 0.0))
    throw std::invalid_argument("AdaptiveDetector: bad config");
  if (static_cast<int>(theta0_.size()) != family.param_dim() ||
      static_cast<int>(theta1_.size()) != family.param_dim())
    throw std::invalid_argument("AdaptiveDetector: parameter dimension mismatch");
}

void AdaptiveDetector::begin(const std::vector<double>& init_state) {
  if (static_cast<int>(init_state.size()) != family_->state_dim())
    throw std::invalid_argument("AdaptiveDetector::begin: state dimension mismatch");
  cur_state_ = init_state;
  stat_.reset();
  t_ = 0;
  states_.clear();
  next_.clear();
  skipped_epochs_ = 0;
}

StepInfo AdaptiveDetector::step(std::span<const double> x, Rng& rng) {
  if (cur_state_.empty()) throw std::logic_error("AdaptiveDetector::step before begin");
  states_.insert(states_.end(), cur_state_.begin(), cur_state_.end());
  next_.insert(next_.end(), x.begin(), x.end());
  ++t_;
  family_->push_observation(cur_state_, x);

  static thread_local std::vector<long> idx;
  static thread_local std::vector<double> grad, score;
  const int pd = family_->param_dim();
  const int sd = family_->state_dim();
  const int od = family_->obs_dim();
  const int m = static_cast<int>(std::min<long>(cfg_.batch_size, t_));
  grad.resize(pd);
  score.resize(pd);

  for (int e = 0; e < cfg_.n_epochs; ++e) {
    sample_indices(t_, m, rng, idx);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (long tau : idx) {
      const std::span<const double> s(states_.data() + tau * sd, static_cast<std::size_t>(sd));
      const std::span<const double> xi(next_.data() + tau * od, static_cast<std::size_t>(od));
      family_->grad_log_density(theta1_, s, xi, score);
      for (int i = 0; i < pd; ++i) grad[i] += score[i] / m;
    }
    if (!all_finite(grad)) {
      ++skipped_epochs_;
      continue;
    }
    clip_to_norm(grad, cfg_.grad_clip);
    for (int i = 0; i < pd; ++i) theta1_[i] += cfg_.step_size * grad[i];
  }

  const std::span<const double> prev_state(states_.data() + (t_ - 1) * sd,
                                           static_cast<std::size_t>(sd));
  const double l =
      family_->log_density(theta1_, prev_state, x) - family_->log_density(theta0_, prev_state, x);
  stat_.update(l);
  StepInfo info;
  info.comparable = stat_.comparable();
  info.stat_value = stat_.value();
  info.l_raw = l;
  info.l_pen = l;
  return info;
}

void sgd_mle_fit(const KernelFamily& family, std::span<const double> states_flat,
                 std::span<const double> next_flat, long n, long t_begin, long t_end, int epochs,
                 int batch_size, double step_size, double grad_clip, Rng& rng,
                 std::vector<double>& theta) {
  if (t_begin < 0 || t_end > n || t_begin >= t_end)
    throw std::invalid_argument("sgd_mle_fit: empty or invalid transition range");
  if (static_cast<int>(theta.size()) != family.param_dim())
    throw std::invalid_argument("sgd_mle_fit: theta has wrong dimension");
  const int pd = family.param_dim();
  const int sd = family.state_dim();
  const int od = family.obs_dim();
  const long len = t_end - t_begin;
  const int m = static_cast<int>(std::min<long>(batch_size, len));
  static thread_local std::vector<long> idx;
  static thread_local std::vector<double> grad, score;
  grad.resize(pd);
  score.resize(pd);
  for (int e = 0; e < epochs; ++e) {
    sample_indices(len, m, rng, idx);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (long off : idx) {
      const long tau = t_begin + off;
      const std::span<const double> s(states_flat.data() + tau * sd, static_cast<std::size_t>(sd));
      const std::span<const double> x(next_flat.data() + tau * od, static_cast<std::size_t>(od));
      family.grad_log_density(theta, s, x, score);
      for (int i = 0; i < pd; ++i) grad[i] += score[i] / m;
    }
    if (!all_finite(grad)) continue;
    clip_to_norm(grad, grad_clip);
    for (int i = 0; i < pd; ++i) theta[i] += step_size * grad[i];
  }
}

GlrDetector::GlrDetector(const KernelFamily& family, GlrConfig cfg) : family_(&family), cfg_(cfg) {
  if (cfg_.stride < 1) throw std::invalid_argument("GlrDetector: stride must be positive");
  if (cfg_.fit_epochs < 0 || cfg_.refresh_epochs < 0)
    throw std::invalid_argument("GlrDetector: epoch budgets must be >= 0");
  if (cfg_.refresh_every < 1) throw std::invalid_argument("GlrDetector: refresh_every must be positive");
  closed_form_ = (family.kind() == FamilyKind::IidGaussianMean);
}

void GlrDetector::begin(const std::vector<double>& init_state) {
  if (static_cast<int>(init_state.size()) != family_->state_dim())
    throw std::invalid_argument("GlrDetector::begin: state dimension mismatch");
  cur_state_ = init_state;
  t_ = 0;
  states_.clear();
  next_.clear();
  cands_.clear();
  theta_global_.clear();
  global_loglik_ = 0.0;
  stat_ = 0.0;
  prefix_rows_.assign(family_->obs_dim(), 0.0);
  prefix_sumsq_.assign(1, 0.0);
}

void GlrDetector::append_transition(std::span<const double> x) {
  states_.insert(states_.end(), cur_state_.begin(), cur_state_.end());
  next_.insert(next_.end(), x.begin(), x.end());
  ++t_;
  family_->push_observation(cur_state_, x);
  if (closed_form_) {
    const int od = family_->obs_dim();
    const double* last = prefix_rows_.data() + (t_ - 1) * od;
    double sq = prefix_sumsq_.back();
    for (int i = 0; i < od; ++i) {
      prefix_rows_.push_back(last[i] + x[i]);
      sq += x[i] * x[i];
    }
    prefix_sumsq_.push_back(sq);
  }
}

double GlrDetector::segment_loglik(std::span<const double> theta, long t_begin, long t_end) const {
  const int sd = family_->state_dim();
  const int od = family_->obs_dim();
  double acc = 0.0;
  for (long tau = t_begin; tau < t_end; ++tau) {
    const std::span<const double> s(states_.data() + tau * sd, static_cast<std::size_t>(sd));
    const std::span<const double> x(next_.data() + tau * od, static_cast<std::size_t>(od));
    acc += family_->log_density(theta, s, x);
  }
  return acc;
}

double GlrDetector::closed_form_stat() const {
  // For a fixed-scale Gaussian mean family the sup log-likelihood of a
  // segment is const - (sumsq - |sum|^2 / m) / (2 sigma^2); the const and
  // sumsq terms cancel in pre + post - total.
  const int od = family_->obs_dim();
  const double sigma = family_->config().sigma;
  const auto seg_score = [&](long a, long b) {  // |sum over (a,b]|^2 / m
    const double* pa = prefix_rows_.data() + a * od;
    const double* pb = prefix_rows_.data() + b * od;
    double acc = 0.0;
    for (int i = 0; i < od; ++i) {
      const double d = pb[i] - pa[i];
      acc += d * d;
    }
    return acc / static_cast<double>(b - a);
  };
  double best = 0.0;
  for (long k = cfg_.stride; k < t_; k += cfg_.stride) {
    const double s = (seg_score(0, k) + seg_score(k, t_) - seg_score(0, t_)) / (2.0 * sigma * sigma);
    best = std::max(best, s);
  }
  return best;
}

StepInfo GlrDetector::step(std::span<const double> x, Rng& rng) {
  if (cur_state_.empty()) throw std::logic_error("GlrDetector::step before begin");
  append_transition(x);
  const int od = family_->obs_dim();
  const int sd = family_->state_dim();

  if (closed_form_) {
    stat_ = closed_form_stat();
  } else {
    if (t_ == 1) {
      theta_global_.resize(family_->param_dim());
      for (double& v : theta_global_) v = rng.gaussian();
      sgd_mle_fit(*family_, states_, next_, t_, 0, t_, cfg_.fit_epochs, cfg_.batch_size,
                  cfg_.step_size, cfg_.grad_clip, rng, theta_global_);
    } else {
      sgd_mle_fit(*family_, states_, next_, t_, 0, t_, cfg_.refresh_epochs, cfg_.batch_size,
                  cfg_.step_size, cfg_.grad_clip, rng, theta_global_);
    }
    global_loglik_ = segment_loglik(theta_global_, 0, t_);

    // New candidates become valid once their post segment is nonempty.
    const long next_k = cands_.empty() ? cfg_.stride : cands_.back().k + cfg_.stride;
    for (long k = next_k; k < t_; k += cfg_.stride) {
      Candidate c;
      c.k = k;
      c.theta_pre = theta_global_;
      sgd_mle_fit(*family_, states_, next_, t_, 0, k, cfg_.fit_epochs, cfg_.batch_size,
                  cfg_.step_size, cfg_.grad_clip, rng, c.theta_pre);
      c.pre_loglik = segment_loglik(c.theta_pre, 0, k);
      c.theta_post = theta_global_;
      sgd_mle_fit(*family_, states_, next_, t_, k, t_, cfg_.fit_epochs, cfg_.batch_size,
                  cfg_.step_size, cfg_.grad_clip, rng, c.theta_post);
      c.post_loglik = segment_loglik(c.theta_post, k, t_);
      cands_.push_back(std::move(c));
    }

    double best = 0.0;
    for (auto& c : cands_) {
      if (c.k >= t_) continue;
      if ((t_ - c.k) % cfg_.refresh_every == 0) {
        sgd_mle_fit(*family_, states_, next_, t_, c.k, t_, cfg_.refresh_epochs, cfg_.batch_size,
                    cfg_.step_size, cfg_.grad_clip, rng, c.theta_post);
        c.post_loglik = segment_loglik(c.theta_post, c.k, t_);
      } else {
        const std::span<const double> s(states_.data() + (t_ - 1) * sd, static_cast<std::size_t>(sd));
        const std::span<const double> xn(next_.data() + (t_ - 1) * od, static_cast<std::size_t>(od));
        c.post_loglik += family_->log_density(c.theta_post, s, xn);
      }
      best = std::max(best, c.pre_loglik + c.post_loglik - global_loglik_);
    }
    stat_ = best;
  }

  StepInfo info;
  info.comparable = stat_;
  info.stat_value = stat_;
  return info;
}

RunResult run_detector(Detector& det, const Trajectory& traj, double threshold, long horizon,
                       Rng& rng, bool keep_trace, bool keep_path) {
  const long max_t = static_cast<long>(traj.obs.size()) - 1;
  if (horizon < 1 || horizon > max_t)
    throw std::invalid_argument("run_detector: horizon must lie in [1, transitions]");
  det.begin(traj.init_state);
  const double cmp_thresh = StatisticState::comparable_threshold(det.stat_kind(), threshold);

  RunResult res;
  res.horizon = horizon;
  res.threshold = threshold;
  if (keep_path) res.comparable_path.reserve(horizon);
  for (long t = 1; t <= horizon; ++t) {
    const StepInfo si = det.step(traj.obs[t], rng);
    const bool fired_now = si.comparable > cmp_thresh;
    if (keep_path) res.comparable_path.push_back(si.comparable);
    if (keep_trace) {
      TraceRow row;
      row.t = t;
      row.detector = det.name();
      row.s_value = si.stat_value;
      row.l_raw = si.l_raw;
      row.l_pen = si.l_pen;
      row.kl = si.kl;
      row.delta = si.delta;
      row.p0 = si.p0;
      row.d_bar = si.d_bar;
      row.mu = si.mu;
      row.s = si.s;
      row.fired = fired_now;
      res.trace.push_back(std::move(row));
    }
    if (fired_now) {
      res.fired = true;
      res.nu = t;
      return res;
    }
  }
  return res;
}

long first_passage(const std::vector<double>& comparable_path, StatKind kind, double threshold) {
  const double cmp = StatisticState::comparable_threshold(kind, threshold);
  for (std::size_t i = 0; i < comparable_path.size(); ++i)
    if (comparable_path[i] > cmp) return static_cast<long>(i) + 1;
  return -1;
}

}  // namespace qcd
