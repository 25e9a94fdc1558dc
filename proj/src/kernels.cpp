#include "qcd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qcd {

namespace {

constexpr double kNegHalfLog2Pi = -0.91893853320467274178;  // -log(sqrt(2*pi))

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
}

}  // namespace

double ConditionalGaussian::log_density(std::span<const double> x) const {
  if (x.size() != mean.size())
    throw std::invalid_argument("ConditionalGaussian::log_density: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double z = (x[i] - mean[i]) / std[i];
    acc += kNegHalfLog2Pi - std::log(std[i]) - 0.5 * z * z;
  }
  return acc;
}

void ConditionalGaussian::sample(Rng& rng, std::span<double> out) const {
  if (out.size() != mean.size())
    throw std::invalid_argument("ConditionalGaussian::sample: dimension mismatch");
  for (std::size_t i = 0; i < mean.size(); ++i) out[i] = mean[i] + std[i] * rng.gaussian();
}

double gaussian_kl(const ConditionalGaussian& a, const ConditionalGaussian& b) {
  if (a.mean.size() != b.mean.size())
    throw std::invalid_argument("gaussian_kl: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.mean.size(); ++i) {
    const double dm = a.mean[i] - b.mean[i];
    const double va = a.std[i] * a.std[i];
    const double vb = b.std[i] * b.std[i];
    acc += std::log(b.std[i] / a.std[i]) + (va + dm * dm) / (2.0 * vb) - 0.5;
  }
  return acc;
}

std::string family_kind_name(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::IidGaussianMean: return "iid-gaussian-mean";
    case FamilyKind::LinearGaussianAr: return "linear-gaussian-ar";
    case FamilyKind::MlpGaussian: return "mlp-gaussian";
  }
  throw std::invalid_argument("family_kind_name: unknown kind");
}

FamilyKind family_kind_from_name(const std::string& name) {
  if (name == "iid-gaussian-mean") return FamilyKind::IidGaussianMean;
  if (name == "linear-gaussian-ar") return FamilyKind::LinearGaussianAr;
  if (name == "mlp-gaussian") return FamilyKind::MlpGaussian;
  throw std::invalid_argument("unknown family kind: " + name);
}

nlohmann::json FamilyConfig::to_json() const {
  return nlohmann::json{{"kind", family_kind_name(kind)},
                        {"obs_dim", obs_dim},
                        {"param_dim", param_dim},
                        {"seed", seed},
                        {"widths", widths},
                        {"sigma", sigma},
                        {"varsigma_min", varsigma_min},
                        {"window", window}};
}

FamilyConfig FamilyConfig::from_json(const nlohmann::json& j) {
  FamilyConfig cfg;
  cfg.kind = family_kind_from_name(j.at("kind").get<std::string>());
  cfg.obs_dim = j.at("obs_dim").get<int>();
  if (j.contains("param_dim")) cfg.param_dim = j.at("param_dim").get<int>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("widths")) cfg.widths = j.at("widths").get<std::vector<int>>();
  if (j.contains("sigma")) cfg.sigma = j.at("sigma").get<double>();
  if (j.contains("varsigma_min")) cfg.varsigma_min = j.at("varsigma_min").get<double>();
  if (j.contains("window")) cfg.window = j.at("window").get<int>();
  return cfg;
}

void MlpNet::init(int in_dim, const std::vector<int>& hidden, int out_dim, Rng& rng) {
  dims.clear();
  dims.push_back(in_dim);
  for (int h : hidden) dims.push_back(h);
  dims.push_back(out_dim);
  w.assign(dims.size() - 1, {});
  b.assign(dims.size() - 1, {});
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int rows = dims[l + 1], cols = dims[l];
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    w[l].resize(static_cast<std::size_t>(rows) * cols);
    b[l].resize(rows);
    for (double& x : w[l]) x = scale * rng.gaussian();
    for (double& x : b[l]) x = 0.1 * rng.gaussian();
  }
}

void MlpNet::forward(std::span<const double> in, std::vector<std::vector<double>>& acts) const {
  acts.resize(dims.size());
  acts[0].assign(in.begin(), in.end());
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int rows = dims[l + 1], cols = dims[l];
    acts[l + 1].resize(rows);
    const bool last = (l + 2 == dims.size());
    for (int i = 0; i < rows; ++i) {
      double acc = b[l][i];
      const double* wi = &w[l][static_cast<std::size_t>(i) * cols];
      for (int j = 0; j < cols; ++j) acc += wi[j] * acts[l][j];
      acts[l + 1][i] = last ? acc : std::tanh(acc);
    }
  }
}

void MlpNet::backward(const std::vector<std::vector<double>>& acts, std::span<const double> dout,
                      std::span<double> din) const {
  // delta holds d(loss)/d(pre-activation of layer l+1); for tanh layers the
  // activation derivative is 1 - a^2 with a the stored post-activation.
  static thread_local std::vector<double> delta, delta_prev;
  delta.assign(dout.begin(), dout.end());
  for (int l = layers() - 1; l >= 0; --l) {
    const int rows = dims[l + 1], cols = dims[l];
    delta_prev.assign(cols, 0.0);
    for (int i = 0; i < rows; ++i) {
      const double di = delta[i];
      const double* wi = &w[l][static_cast<std::size_t>(i) * cols];
      for (int j = 0; j < cols; ++j) delta_prev[j] += wi[j] * di;
    }
    if (l > 0) {
      for (int j = 0; j < cols; ++j) {
        const double a = acts[l][j];
        delta_prev[j] *= (1.0 - a * a);
      }
      delta.swap(delta_prev);
    } else {
      for (int j = 0; j < cols; ++j) din[j] += delta_prev[j];
    }
  }
}

KernelFamily KernelFamily::make(const FamilyConfig& cfg_in) {
  FamilyConfig cfg = cfg_in;
  if (cfg.obs_dim < 1) throw std::invalid_argument("KernelFamily: obs_dim must be positive");
  if (cfg.window < 1) throw std::invalid_argument("KernelFamily: window must be positive");
  if (cfg.varsigma_min <= 0.0) throw std::invalid_argument("KernelFamily: varsigma_min must be positive");
  const int state_dim = cfg.obs_dim * cfg.window;
  switch (cfg.kind) {
    case FamilyKind::IidGaussianMean:
      if (cfg.param_dim == 0) cfg.param_dim = cfg.obs_dim;
      if (cfg.param_dim != cfg.obs_dim)
        throw std::invalid_argument("iid-gaussian-mean: param_dim must equal obs_dim");
      if (cfg.sigma < cfg.varsigma_min)
        throw std::invalid_argument("iid-gaussian-mean: sigma below varsigma_min");
      break;
    case FamilyKind::LinearGaussianAr: {
      const int need = cfg.obs_dim * state_dim + cfg.obs_dim;
      if (cfg.param_dim == 0) cfg.param_dim = need;
      if (cfg.param_dim != need)
        throw std::invalid_argument("linear-gaussian-ar: param_dim must equal obs_dim*state_dim + obs_dim");
      if (cfg.sigma < cfg.varsigma_min)
        throw std::invalid_argument("linear-gaussian-ar: sigma below varsigma_min");
      break;
    }
    case FamilyKind::MlpGaussian:
      if (cfg.param_dim == 0) cfg.param_dim = cfg.obs_dim;
      if (cfg.param_dim < 1) throw std::invalid_argument("mlp-gaussian: param_dim must be positive");
      for (int h : cfg.widths)
        if (h < 1) throw std::invalid_argument("mlp-gaussian: hidden widths must be positive");
      break;
  }
  KernelFamily fam;
  fam.cfg_ = cfg;
  if (cfg.kind == FamilyKind::MlpGaussian) {
    // Both networks are drawn from one stream so the family is a pure
    // function of (seed, widths, dims); mean net first, then std net.
    Rng rng(mix_seed(cfg.seed, 0x6b65726e656c73ULL));
    fam.mean_net_.init(cfg.param_dim + state_dim, cfg.widths, cfg.obs_dim, rng);
    fam.std_net_.init(cfg.param_dim + state_dim, cfg.widths, cfg.obs_dim, rng);
  }
  return fam;
}

void KernelFamily::check_theta(std::span<const double> theta) const {
  if (static_cast<int>(theta.size()) != cfg_.param_dim)
    throw std::invalid_argument("KernelFamily: theta has wrong dimension");
  check_finite(theta, "theta");
}

void KernelFamily::check_state(std::span<const double> state) const {
  if (static_cast<int>(state.size()) != state_dim())
    throw std::invalid_argument("KernelFamily: state has wrong dimension");
  check_finite(state, "state");
}

ConditionalGaussian KernelFamily::conditional(std::span<const double> theta,
                                              std::span<const double> state) const {
  check_theta(theta);
  check_state(state);
  ConditionalGaussian cg;
  cg.mean.resize(cfg_.obs_dim);
  cg.std.resize(cfg_.obs_dim);
  switch (cfg_.kind) {
    case FamilyKind::IidGaussianMean:
      std::copy(theta.begin(), theta.end(), cg.mean.begin());
      std::fill(cg.std.begin(), cg.std.end(), cfg_.sigma);
      break;
    case FamilyKind::LinearGaussianAr: {
      const int sd = state_dim();
      for (int i = 0; i < cfg_.obs_dim; ++i) {
        double acc = theta[cfg_.obs_dim * sd + i];  // bias block after the matrix
        const double* row = theta.data() + static_cast<std::size_t>(i) * sd;
        for (int j = 0; j < sd; ++j) acc += row[j] * state[j];
        cg.mean[i] = acc;
      }
      std::fill(cg.std.begin(), cg.std.end(), cfg_.sigma);
      break;
    }
    case FamilyKind::MlpGaussian: {
      static thread_local std::vector<double> input;
      static thread_local std::vector<std::vector<double>> acts;
      input.assign(theta.begin(), theta.end());
      input.insert(input.end(), state.begin(), state.end());
      mean_net_.forward(input, acts);
      cg.mean = acts.back();
      std_net_.forward(input, acts);
      for (int i = 0; i < cfg_.obs_dim; ++i) cg.std[i] = cfg_.varsigma_min + softplus(acts.back()[i]);
      break;
    }
  }
  return cg;
}

double KernelFamily::log_density(std::span<const double> theta, std::span<const double> state,
                                 std::span<const double> x) const {
  return conditional(theta, state).log_density(x);
}

void KernelFamily::grad_log_density(std::span<const double> theta, std::span<const double> state,
                                    std::span<const double> x, std::span<double> out) const {
  check_theta(theta);
  check_state(state);
  if (static_cast<int>(x.size()) != cfg_.obs_dim)
    throw std::invalid_argument("grad_log_density: x has wrong dimension");
  if (static_cast<int>(out.size()) != cfg_.param_dim)
    throw std::invalid_argument("grad_log_density: out has wrong dimension");
  std::fill(out.begin(), out.end(), 0.0);
  switch (cfg_.kind) {
    case FamilyKind::IidGaussianMean: {
      const double inv_var = 1.0 / (cfg_.sigma * cfg_.sigma);
      for (int i = 0; i < cfg_.obs_dim; ++i) out[i] = (x[i] - theta[i]) * inv_var;
      break;
    }
    case FamilyKind::LinearGaussianAr: {
      const int sd = state_dim();
      const double inv_var = 1.0 / (cfg_.sigma * cfg_.sigma);
      for (int i = 0; i < cfg_.obs_dim; ++i) {
        double m = theta[cfg_.obs_dim * sd + i];
        const double* row = theta.data() + static_cast<std::size_t>(i) * sd;
        for (int j = 0; j < sd; ++j) m += row[j] * state[j];
        const double r = (x[i] - m) * inv_var;
        double* grow = out.data() + static_cast<std::size_t>(i) * sd;
        for (int j = 0; j < sd; ++j) grow[j] = r * state[j];
        out[cfg_.obs_dim * sd + i] = r;
      }
      break;
    }
    case FamilyKind::MlpGaussian: {
      static thread_local std::vector<double> input, dmu, draw, din;
      static thread_local std::vector<std::vector<double>> acts_mu, acts_sd;
      input.assign(theta.begin(), theta.end());
      input.insert(input.end(), state.begin(), state.end());
      mean_net_.forward(input, acts_mu);
      std_net_.forward(input, acts_sd);
      dmu.resize(cfg_.obs_dim);
      draw.resize(cfg_.obs_dim);
      for (int i = 0; i < cfg_.obs_dim; ++i) {
        const double raw = acts_sd.back()[i];
        const double sd = cfg_.varsigma_min + softplus(raw);
        const double resid = x[i] - acts_mu.back()[i];
        dmu[i] = resid / (sd * sd);
        const double dsd = resid * resid / (sd * sd * sd) - 1.0 / sd;
        draw[i] = dsd * sigmoid(raw);  // d std / d raw = softplus'(raw)
      }
      din.assign(input.size(), 0.0);
      mean_net_.backward(acts_mu, dmu, din);
      std_net_.backward(acts_sd, draw, din);
      std::copy(din.begin(), din.begin() + cfg_.param_dim, out.begin());
      break;
    }
  }
}

void KernelFamily::sample(std::span<const double> theta, std::span<const double> state, Rng& rng,
                          std::span<double> out) const {
  conditional(theta, state).sample(rng, out);
}

double KernelFamily::kl_conditional(std::span<const double> theta_a, std::span<const double> theta_b,
                                    std::span<const double> state) const {
  return gaussian_kl(conditional(theta_a, state), conditional(theta_b, state));
}

double KernelFamily::kl_rate_estimate(std::span<const double> theta_a, std::span<const double> theta_b,
                                      const std::vector<std::vector<double>>& base_states) const {
  if (base_states.empty())
    throw std::invalid_argument("kl_rate_estimate: base_states must be nonempty");
  double acc = 0.0;
  for (const auto& s : base_states) acc += kl_conditional(theta_a, theta_b, s);
  return acc / static_cast<double>(base_states.size());
}

std::vector<double> KernelFamily::stationary_warmup(std::span<const double> theta,
                                                    std::span<const double> x0, int burn_in,
                                                    Rng& rng) const {
  if (static_cast<int>(x0.size()) != cfg_.obs_dim)
    throw std::invalid_argument("stationary_warmup: x0 has wrong dimension");
  if (burn_in < 0) throw std::invalid_argument("stationary_warmup: burn_in must be >= 0");
  std::vector<double> state(state_dim());
  for (int k = 0; k < cfg_.window; ++k)
    std::copy(x0.begin(), x0.end(), state.begin() + static_cast<std::size_t>(k) * cfg_.obs_dim);
  std::vector<double> x(cfg_.obs_dim);
  for (int i = 0; i < burn_in; ++i) {
    sample(theta, state, rng, x);
    push_observation(state, x);
  }
  return state;
}

void KernelFamily::push_observation(std::vector<double>& state, std::span<const double> x) const {
  check_state(state);
  if (static_cast<int>(x.size()) != cfg_.obs_dim)
    throw std::invalid_argument("push_observation: x has wrong dimension");
  if (cfg_.window == 1) {
    std::copy(x.begin(), x.end(), state.begin());
    return;
  }
  std::copy(state.begin() + cfg_.obs_dim, state.end(), state.begin());
  std::copy(x.begin(), x.end(), state.end() - cfg_.obs_dim);
}

}  // namespace qcd
