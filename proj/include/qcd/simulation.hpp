#pragma once

#include <string>
#include <vector>

#include "qcd/kernels.hpp"
#include "qcd/rng.hpp"

namespace qcd {

// Piecewise-stationary stream description. Segment k runs over transition
// indices [change_points[k-1], change_points[k]) with change_points[-1] = 0,
// so an empty change_points vector describes a stream with no change.
struct ChangeSpec {
  std::vector<long> change_points;          // strictly increasing, inside (0, horizon)
  std::vector<std::vector<double>> params;  // one theta per segment, size = changes + 1
  long horizon = 0;                         // number of transitions to generate
  std::vector<double> x0;                   // seed observation for the warmup
  int burn_in = 200;                        // warmup steps under the first segment
};

struct Trajectory {
  std::vector<std::vector<double>> obs;  // X_0 .. X_horizon
  std::vector<int> segment;              // segment that generated obs[t] (0 for t = 0)
  std::vector<double> init_state;        // conditioning state at time 0 (window-concatenated)
};

// Samples the stream: warms up under the first segment, then draws
// X_{t+1} ~ f_{theta_k}(. | state_t) with k the active segment of t.
Trajectory generate(const KernelFamily& family, const ChangeSpec& spec, Rng& rng);

// Geometric change point: P(lambda = k) = rho (1-rho)^(k-1), k >= 1.
long sample_change_point(double rho, Rng& rng);

struct PairSample {
  std::vector<double> theta0, theta1;
  double achieved_kl = 0.0;
  std::vector<std::vector<double>> base_states;  // warmed-up states the KL was measured on
};

// Draws theta0 from a standard normal, then bisects a scale along a random
// unit direction until the estimated KL rate between theta0 and
// theta0 + s * u hits target_kl within relative tolerance tol. Directions
// are resampled up to 20 times (scales capped at 50); an unreachable target
// raises a diagnostic error.
PairSample sample_pair_at_kl(const KernelFamily& family, double target_kl, double tol, Rng& rng,
                             int n_base_states = 64, int burn_in = 200);

// The direction-and-bisection core of sample_pair_at_kl, starting from a
// given parameter. Returns the shifted parameter whose KL rate from
// theta_from (measured on base_states) hits the target.
std::vector<double> sample_shift_at_kl(const KernelFamily& family, std::span<const double> theta_from,
                                       double target_kl, double tol, Rng& rng,
                                       const std::vector<std::vector<double>>& base_states);

// CSV rows "t,x_1..x_dim,segment_index"; byte-stable for a fixed trajectory.
std::string trajectory_to_csv(const Trajectory& traj);

}  // namespace qcd
