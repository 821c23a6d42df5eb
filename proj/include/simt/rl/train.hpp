#pragma once

#include <functional>
#include <optional>

#include "simt/engine.hpp"
#include "simt/rl/trpo.hpp"

namespace simt::rl {

struct RlConfig {
  nn::MlpConfig policy;  // state 2 -> hidden -> action 2
  int64_t iterations = 500;
  int64_t task_batch = 20;  // N tasks per meta-update
  int64_t rollouts = 20;    // K rollouts per task
  int horizon = 100;
  double inner_alpha = 0.1;
  double eval_alpha_rest = 0.05;  // step size after the first eval step
  GAEConfig gae;
  TrpoConfig trpo;
  std::optional<engine::SimtConfig> simt;
  bool standardize_advantages = true;
  // Fraction of query states used for Fisher-vector products (1 = all).
  double fisher_subsample = 1.0;
  // Adapt the momentum network on the query trajectories (sampled under
  // pi_phi) instead of the support trajectories.
  bool target_from_query = false;
  double goal_lo = -0.5, goal_hi = 0.5;
  uint64_t seed = 0;
};

struct RlIterStats {
  int64_t iter = 0;
  double pre_return = 0, pre_return_std = 0;    // support rollouts under theta
  double post_return = 0, post_return_std = 0;  // query rollouts under phi
  double surrogate = 0, kd = 0, total = 0;
  double lambda_eff = 0;
  TrpoReport trpo;
};

struct RlState {
  ad::ParamSet theta;
  engine::MomentumState momentum;
  int64_t iter = 0;
  double best_return = 0;
  bool has_best = false;
  ad::ParamSet best_theta;
  ad::ParamSet best_moment;
};

RlState make_rl_state(const RlConfig& cfg);

// One Algorithm-2 iteration: sample support rollouts under pi_theta per
// task, build the momentum target, adapt the solver, sample query rollouts
// under pi_phi, combine the surrogate and distillation terms, take a
// trust-region meta-step, then update the momentum network.
RlIterStats rl_train_iteration(RlState& state, const RlConfig& cfg);

struct RlEvalCurve {
  // mean/std of per-task mean returns after 0..steps gradient steps
  std::vector<double> mean_return;
  std::vector<double> std_return;
};

// Adaptation curve on fresh tasks: step sizes inner_alpha for the first
// step, eval_alpha_rest afterwards.
RlEvalCurve rl_evaluate(const RlConfig& cfg, const ad::ParamSet& policy, int64_t n_tasks,
                        int adapt_steps, uint64_t eval_seed);

}  // namespace simt::rl
