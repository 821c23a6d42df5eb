#pragma once

#include <functional>
#include <optional>
#include <span>

#include "simt/adapt.hpp"
#include "simt/rl/baseline.hpp"

namespace simt::rl {

// Vanilla policy-gradient loss: -(1/n) sum log pi(a|s) * A over all pairs.
ad::NodeId pg_loss(ad::Graph& g, const nn::MlpConfig& cfg, const ad::ParamNodes& policy,
                   const PairBatch& pairs, std::span<const double> advantages);

// One policy-gradient step phi = theta - alpha * grad; differentiable when
// create_graph is set (the meta-update needs d phi / d theta).
ad::ParamNodes pg_adapt(ad::Graph& g, const nn::MlpConfig& cfg, const ad::ParamNodes& theta,
                        const PairBatch& pairs, std::span<const double> advantages, double alpha,
                        bool create_graph);

// Value-only variant operating on parameter values.
ad::ParamSet pg_adapt_values(const nn::MlpConfig& cfg, const ad::ParamSet& theta,
                             const PairBatch& pairs, std::span<const double> advantages,
                             double alpha);

// Negative importance-weighted surrogate advantage: ratios in log space
// against the recorded behavior log-probabilities.
ad::NodeId trpo_surrogate(ad::Graph& g, const nn::MlpConfig& cfg, const ad::ParamNodes& phi_new,
                          const PairBatch& query, std::span<const double> advantages);

// Mean closed-form Gaussian KL(pi_old(.|s) || pi_new(.|s)) over the states;
// old side given by values (constants).
ad::NodeId avg_policy_kl_node(ad::Graph& g, const nn::MlpConfig& cfg,
                              const ad::ParamSet& phi_old, const ad::ParamNodes& phi_new,
                              std::span<const double> states, int64_t n_states);

double avg_policy_kl_value(const nn::MlpConfig& cfg, const ad::ParamSet& phi_old,
                           const ad::ParamSet& phi_new, std::span<const double> states,
                           int64_t n_states);

// Distillation loss for policies: mean KL(pi_phi(s) || pi_target(s)) with the
// target side held constant.
ad::NodeId kd_rl_loss(ad::Graph& g, const nn::MlpConfig& cfg, const ad::ParamNodes& phi,
                      const ad::ParamSet& phi_target, std::span<const double> states,
                      int64_t n_states);

struct TrpoConfig {
  double delta = 0.01;
  int cg_iters = 10;
  double cg_damping = 1e-2;
  double backtrack_ratio = 0.5;
  int max_backtracks = 10;
};

struct TrpoReport {
  bool accepted = false;
  double kl = 0;
  double loss_before = 0;
  double loss_after = 0;
  int backtracks = 0;
  double grad_norm = 0;
};

// The meta-objective seen by the trust-region update. All callbacks evaluate
// at candidate parameters; fisher_vp applies the KL Hessian at the current
// parameters to a compatible vector (damping is added by the solver).
struct TrpoProblem {
  std::function<double(const ad::ParamSet&)> loss_value;
  std::function<ad::ParamSet(const ad::ParamSet&)> loss_grad;
  std::function<ad::ParamSet(const ad::ParamSet&)> fisher_vp;
  std::function<double(const ad::ParamSet&)> kl_to_old;
};

// Natural-gradient step via conjugate gradients on Fisher-vector products,
// scaled to the trust-region boundary, then a backtracking line search that
// accepts only if the loss improves and the measured KL stays within delta.
// If every backtrack fails the parameters are returned unchanged.
ad::ParamSet trpo_meta_update(const ad::ParamSet& theta, const TrpoProblem& problem,
                              const TrpoConfig& cfg, TrpoReport* report = nullptr);

}  // namespace simt::rl
