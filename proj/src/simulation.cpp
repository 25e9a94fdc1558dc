#include "qcd/simulation.hpp"

#include <cmath>
#include <stdexcept>

#include "qcd/csv.hpp"

namespace qcd {

namespace {

void validate_spec(const KernelFamily& family, const ChangeSpec& spec) {
  if (spec.horizon < 1) throw std::invalid_argument("ChangeSpec: horizon must be positive");
  if (spec.burn_in < 0) throw std::invalid_argument("ChangeSpec: burn_in must be >= 0");
  if (spec.params.size() != spec.change_points.size() + 1)
    throw std::invalid_argument("ChangeSpec: need one parameter vector per segment");
  long prev = 0;
  for (long cp : spec.change_points) {
    if (cp <= prev || cp >= spec.horizon)
      throw std::invalid_argument("ChangeSpec: change points must be strictly increasing inside (0, horizon)");
    prev = cp;
  }
  for (const auto& theta : spec.params)
    if (static_cast<int>(theta.size()) != family.param_dim())
      throw std::invalid_argument("ChangeSpec: parameter dimension mismatch");
  if (static_cast<int>(spec.x0.size()) != family.obs_dim())
    throw std::invalid_argument("ChangeSpec: x0 dimension mismatch");
}

}  // namespace

Trajectory generate(const KernelFamily& family, const ChangeSpec& spec, Rng& rng) {
  validate_spec(family, spec);
  Trajectory traj;
  traj.init_state = family.stationary_warmup(spec.params[0], spec.x0, spec.burn_in, rng);
  traj.obs.resize(spec.horizon + 1);
  traj.segment.resize(spec.horizon + 1);
  traj.obs[0].assign(traj.init_state.end() - family.obs_dim(), traj.init_state.end());
  traj.segment[0] = 0;

  std::vector<double> state = traj.init_state;
  std::vector<double> x(family.obs_dim());
  std::size_t seg = 0;
  for (long t = 0; t < spec.horizon; ++t) {
    while (seg < spec.change_points.size() && t >= spec.change_points[seg]) ++seg;
    family.sample(spec.params[seg], state, rng, x);
    traj.obs[t + 1] = x;
    traj.segment[t + 1] = static_cast<int>(seg);
    family.push_observation(state, x);
  }
  return traj;
}

long sample_change_point(double rho, Rng& rng) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("sample_change_point: rho must lie in (0,1)");
  const double u = rng.uniform();
  const long k = static_cast<long>(std::ceil(std::log1p(-u) / std::log1p(-rho)));
  return k < 1 ? 1 : k;
}

std::vector<double> sample_shift_at_kl(const KernelFamily& family, std::span<const double> theta_from,
                                       double target_kl, double tol, Rng& rng,
                                       const std::vector<std::vector<double>>& base_states) {
  if (!(target_kl > 0.0)) throw std::invalid_argument("sample_shift_at_kl: target_kl must be positive");
  if (!(tol > 0.0 && tol < 1.0)) throw std::invalid_argument("sample_shift_at_kl: tol must lie in (0,1)");
  if (base_states.empty()) throw std::invalid_argument("sample_shift_at_kl: base_states must be nonempty");

  constexpr double kScaleCap = 50.0;
  constexpr int kRetryCap = 20;
  constexpr int kBisectIters = 80;

  std::vector<double> cand(family.param_dim());
  const auto kl_at = [&](std::span<const double> dir, double s) {
    for (int i = 0; i < family.param_dim(); ++i) cand[i] = theta_from[i] + s * dir[i];
    return family.kl_rate_estimate(theta_from, cand, base_states);
  };

  std::vector<double> dir(family.param_dim());
  for (int attempt = 0; attempt < kRetryCap; ++attempt) {
    double norm = 0.0;
    for (double& v : dir) {
      v = rng.gaussian();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (double& v : dir) v /= norm;

    double lo = 0.0, hi = 1.0;
    double kl_hi = kl_at(dir, hi);
    while (kl_hi < target_kl && hi < kScaleCap) {
      lo = hi;
      hi = std::min(2.0 * hi, kScaleCap);
      kl_hi = kl_at(dir, hi);
    }
    if (kl_hi < target_kl) continue;  // direction too flat within the cap

    double s = hi, kl = kl_hi;
    for (int it = 0; it < kBisectIters; ++it) {
      if (std::fabs(kl - target_kl) <= tol * target_kl) break;
      s = 0.5 * (lo + hi);
      kl = kl_at(dir, s);
      (kl < target_kl ? lo : hi) = s;
    }
    if (std::fabs(kl - target_kl) <= tol * target_kl) {
      for (int i = 0; i < family.param_dim(); ++i) cand[i] = theta_from[i] + s * dir[i];
      return cand;
    }
  }
  throw std::runtime_error(
      "sample_shift_at_kl: target KL " + format_double(target_kl) +
      " unreachable within scale cap 50 after 20 direction retries");
}

PairSample sample_pair_at_kl(const KernelFamily& family, double target_kl, double tol, Rng& rng,
                             int n_base_states, int burn_in) {
  if (n_base_states < 1) throw std::invalid_argument("sample_pair_at_kl: need at least one base state");
  PairSample out;
  out.theta0.resize(family.param_dim());
  for (double& v : out.theta0) v = rng.gaussian();

  // Warm the chain under theta0 and collect successive states; the KL rate
  // target is defined against exactly these base points.
  std::vector<double> x0(family.obs_dim(), 0.0);
  std::vector<double> state = family.stationary_warmup(out.theta0, x0, burn_in, rng);
  std::vector<double> x(family.obs_dim());
  out.base_states.reserve(n_base_states);
  for (int i = 0; i < n_base_states; ++i) {
    out.base_states.push_back(state);
    family.sample(out.theta0, state, rng, x);
    family.push_observation(state, x);
  }

  out.theta1 = sample_shift_at_kl(family, out.theta0, target_kl, tol, rng, out.base_states);
  out.achieved_kl = family.kl_rate_estimate(out.theta0, out.theta1, out.base_states);
  return out;
}

std::string trajectory_to_csv(const Trajectory& traj) {
  if (traj.obs.empty()) throw std::invalid_argument("trajectory_to_csv: empty trajectory");
  const std::size_t dim = traj.obs[0].size();
  std::string out = "t";
  for (std::size_t i = 1; i <= dim; ++i) out += ",x_" + format_int(static_cast<long long>(i));
  out += ",segment_index\n";
  for (std::size_t t = 0; t < traj.obs.size(); ++t) {
    out += format_int(static_cast<long long>(t));
    for (double v : traj.obs[t]) {
      out += ',';
      out += format_double(v);
    }
    out += ',';
    out += format_int(traj.segment[t]);
    out += '\n';
  }
  return out;
}

}  // namespace qcd
