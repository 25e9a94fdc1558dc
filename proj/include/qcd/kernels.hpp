#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcd/rng.hpp"

namespace qcd {

// A diagonal Gaussian transition law f_theta(x' | x). Every family below
// maps (theta, conditioning state) to one of these; detection statistics,
// sampling and KL computations all go through it.
struct ConditionalGaussian {
  std::vector<double> mean;
  std::vector<double> std;  // entries strictly positive

  double log_density(std::span<const double> x) const;
  void sample(Rng& rng, std::span<double> out) const;
};

// KL(a || b) between diagonal Gaussians of equal dimension, in nats.
double gaussian_kl(const ConditionalGaussian& a, const ConditionalGaussian& b);

enum class FamilyKind { IidGaussianMean, LinearGaussianAr, MlpGaussian };

std::string family_kind_name(FamilyKind kind);
FamilyKind family_kind_from_name(const std::string& name);

struct FamilyConfig {
  FamilyKind kind = FamilyKind::IidGaussianMean;
  int obs_dim = 1;
  int param_dim = 0;           // filled from kind/obs_dim when left 0
  std::uint64_t seed = 0;      // draws the fixed network weights (mlp only)
  std::vector<int> widths = {16, 16};  // hidden layer widths (mlp only)
  double sigma = 1.0;          // fixed noise scale (iid and linear-ar)
  double varsigma_min = 1e-3;  // floor on every output std
  int window = 1;              // Markov order: conditioning on the last w observations

  nlohmann::json to_json() const;
  static FamilyConfig from_json(const nlohmann::json& j);
};

// Fixed fully connected network with tanh hidden layers and a linear output.
// The weights are frozen at construction; gradients are only ever taken with
// respect to the *inputs* (the task parameter block), by hand-rolled
// reverse-mode passes in KernelFamily.
struct MlpNet {
  std::vector<int> dims;                   // layer sizes, input first
  std::vector<std::vector<double>> w;      // w[l]: dims[l+1] x dims[l], row-major
  std::vector<std::vector<double>> b;      // b[l]: dims[l+1]

  void init(int in_dim, const std::vector<int>& hidden, int out_dim, Rng& rng);
  int layers() const { return static_cast<int>(w.size()); }

  // Forward pass; `acts` receives the post-activation of every layer
  // (acts[0] is the input copy, acts.back() the linear output).
  void forward(std::span<const double> in, std::vector<std::vector<double>>& acts) const;

  // Reverse pass: given d(loss)/d(output), accumulates d(loss)/d(input) into
  // `din` (which must be pre-sized and may already hold another net's
  // contribution). `acts` must come from a matching forward call.
  void backward(const std::vector<std::vector<double>>& acts, std::span<const double> dout,
                std::span<double> din) const;
};

// One of three parametric transition families:
//   iid-gaussian-mean  mean = theta, fixed std sigma, state ignored
//   linear-gaussian-ar mean = A x + b with (A, b) unpacked from theta, fixed std
//   mlp-gaussian       mean, std = fixed random networks of concat(theta, state),
//                      std = varsigma_min + softplus(raw)
// The conditioning state is the concatenation of the last `window`
// observations (window = 1 gives the ordinary Markov case).
class KernelFamily {
 public:
  static KernelFamily make(const FamilyConfig& cfg);

  const FamilyConfig& config() const { return cfg_; }
  FamilyKind kind() const { return cfg_.kind; }
  int obs_dim() const { return cfg_.obs_dim; }
  int param_dim() const { return cfg_.param_dim; }
  int state_dim() const { return cfg_.obs_dim * cfg_.window; }
  int window() const { return cfg_.window; }

  ConditionalGaussian conditional(std::span<const double> theta, std::span<const double> state) const;

  double log_density(std::span<const double> theta, std::span<const double> state,
                     std::span<const double> x) const;

  // d log f_theta(x | state) / d theta, written to `out` (size param_dim).
  // For mlp-gaussian the gradient flows through both the mean and the std
  // networks; the fixed network weights never receive gradients.
  void grad_log_density(std::span<const double> theta, std::span<const double> state,
                        std::span<const double> x, std::span<double> out) const;

  void sample(std::span<const double> theta, std::span<const double> state, Rng& rng,
              std::span<double> out) const;

  // Closed-form KL(f_a(.|state) || f_b(.|state)) between the two conditionals.
  double kl_conditional(std::span<const double> theta_a, std::span<const double> theta_b,
                        std::span<const double> state) const;

  // Monte Carlo KL rate: mean of kl_conditional over the supplied base states.
  double kl_rate_estimate(std::span<const double> theta_a, std::span<const double> theta_b,
                          const std::vector<std::vector<double>>& base_states) const;

  // Runs the chain forward burn_in steps from the state built by tiling x0,
  // returning the resulting conditioning state (window-concatenated).
  std::vector<double> stationary_warmup(std::span<const double> theta, std::span<const double> x0,
                                        int burn_in, Rng& rng) const;

  // Shifts `state` left by one observation and appends x (in place).
  void push_observation(std::vector<double>& state, std::span<const double> x) const;

 private:
  FamilyConfig cfg_;
  MlpNet mean_net_, std_net_;

  void check_theta(std::span<const double> theta) const;
  void check_state(std::span<const double> state) const;
};

}  // namespace qcd
