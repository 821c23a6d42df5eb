#pragma once

#include <span>
#include <vector>

#include "simt/mlp.hpp"
#include "simt/rl/env.hpp"

namespace simt::rl {

// A diagonal-Gaussian policy: an MLP mean head plus a state-independent
// learnable log standard deviation per action dimension.
inline constexpr const char* kLogStdName = "log_std";

ad::ParamSet init_policy(const nn::MlpConfig& mlp);

// One rollout: states at which actions were taken, the (unclipped) sampled
// actions, rewards, behavior log-probabilities, and baseline values.
struct Trajectory {
  std::vector<double> states;     // (T, 2)
  std::vector<double> actions;    // (T, 2)
  std::vector<double> rewards;    // (T)
  std::vector<double> log_probs;  // (T)
  std::vector<double> values;     // (T), filled by the baseline
  bool terminated = false;        // reached the goal before the horizon

  int64_t length() const { return static_cast<int64_t>(rewards.size()); }
  double undiscounted_return() const {
    double r = 0;
    for (double v : rewards) r += v;
    return r;
  }
};

// K rollouts in one environment configuration, sampled in lockstep batches.
std::vector<Trajectory> collect_rollouts(const nn::MlpConfig& cfg, const ad::ParamSet& policy,
                                         std::array<double, 2> goal, int horizon, int64_t k,
                                         Rng& rng);

// Diagonal-Gaussian log density of one (state, action) pair as a scalar node.
ad::NodeId gaussian_logprob(ad::Graph& g, const nn::MlpConfig& cfg,
                            const ad::ParamNodes& policy, std::span<const double> state,
                            std::span<const double> action);

// Row log-probabilities for a batch of (state, action) pairs; `states` is a
// constant (n, state_dim) node, actions are constants.
ad::NodeId policy_logprob_rows(ad::Graph& g, const nn::MlpConfig& cfg,
                               const ad::ParamNodes& policy, ad::NodeId states,
                               std::span<const double> actions);

double gaussian_logprob_value(const double* mu, const double* log_std, const double* action,
                              int64_t dim);

// Closed-form KL(N(mu_p, sig_p) || N(mu_q, sig_q)) per row; log-std operands
// are rank-1 (action_dim,), means are (n, action_dim).
ad::NodeId gaussian_kl_rows(ad::Graph& g, ad::NodeId mu_p, ad::NodeId log_std_p, ad::NodeId mu_q,
                            ad::NodeId log_std_q);

// Flattened per-pair views over a set of trajectories.
struct PairBatch {
  std::vector<double> states;   // (n, 2)
  std::vector<double> actions;  // (n, 2)
  std::vector<double> log_probs;
  int64_t count = 0;
};

PairBatch flatten_pairs(std::span<const Trajectory> trajs);

}  // namespace simt::rl
