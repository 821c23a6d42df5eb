#pragma once

#include <span>
#include <vector>

#include "simt/rl/policy.hpp"

namespace simt::rl {

struct GAEConfig {
  double gamma = 0.95;
  double lam = 1.0;
};

// Linear feature baseline: least-squares fit of discounted returns-to-go on
// [s, s*s, 0.01 t, (0.01 t)^2, (0.01 t)^3, 1], ridge-regularized.
struct LinearBaseline {
  std::vector<double> weights;
  int64_t state_dim = 2;

  double predict(const double* state, int64_t t) const;
};

LinearBaseline baseline_fit(std::span<const Trajectory> trajs, double gamma,
                            double ridge = 1e-5);

// Writes baseline predictions into traj.values.
void fill_values(std::span<Trajectory> trajs, const LinearBaseline& baseline);

// GAE: delta_t = r_t + gamma V(s_{t+1}) - V(s_t) with V = 0 past the episode
// end; A_t = sum_k (gamma lam)^k delta_{t+k}. Requires values filled.
std::vector<double> gae_advantages(const Trajectory& traj, const GAEConfig& cfg);

// Advantages for every pair across the trajectories, in pair order.
std::vector<double> gae_advantages_flat(std::span<const Trajectory> trajs, const GAEConfig& cfg);

// Standardize to zero mean, unit variance (in place).
void standardize(std::span<double> xs);

}  // namespace simt::rl
