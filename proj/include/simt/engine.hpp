#pragma once

#include <optional>
#include <span>

#include "simt/adapt.hpp"
#include "simt/mlp.hpp"
#include "simt/tasks.hpp"

namespace simt::engine {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ad::ParamSet m, v;
  int64_t t = 0;
};

AdamState make_adam_state(const ad::ParamSet& params);
void adam_step(ad::ParamSet& params, AdamState& state, const AdamConfig& cfg,
               const ad::ParamSet& grad);

// Exponential moving average of the meta-model, initialized as an exact copy.
struct MomentumState {
  ad::ParamSet theta_moment;
  double eta = 0.995;
};

MomentumState make_momentum(const ad::ParamSet& theta, double eta);

// theta_moment <- eta * theta_moment + (1 - eta) * theta. Pure value update.
void ema_update(MomentumState& state, const ad::ParamSet& theta);

struct SimtConfig {
  double lambda = 0.5;
  double temperature = 4.0;
  double eta = 0.995;
  nn::DropoutSpec dropout;
  bool teach_on_support = false;
  int64_t lambda_rampup_steps = 0;
  // Algorithm form: the perturbed solver feeds both loss terms. Turning this
  // off evaluates the task term on the unperturbed solver.
  bool dropout_on_task_term = true;
};

double lambda_effective(const SimtConfig& cfg, int64_t step);

// Mean over rows of ||student - target||^2; the target side is detached.
ad::NodeId kd_loss_regression(ad::Graph& g, ad::NodeId student_out, ad::NodeId target_out);

// T^2 * KL(softmax(target/T) || softmax(student/T)), mean over rows; the
// target side is detached.
ad::NodeId kd_loss_classification(ad::Graph& g, ad::NodeId student_logits,
                                  ad::NodeId target_logits, double temperature);

// (1 - lambda) * task_term + lambda * kd_term.
ad::NodeId hybrid_loss(ad::Graph& g, ad::NodeId task_term, ad::NodeId kd_term, double lambda_eff);

struct MomentumTargetResult {
  meta::Solver solver;
  // Leaves the momentum parameters were bound to; gradients of any
  // downstream loss with respect to these are identically zero.
  std::vector<ad::NodeId> theta_moment_nodes;
};

// Adapt(theta_moment, S) with first-order gradients only; the resulting
// solver is detached so it acts as a frozen teacher.
MomentumTargetResult momentum_target(ad::Graph& g, const ad::ParamSet& theta_moment,
                                     const meta::AdaptConfig& student_cfg,
                                     const meta::LossFn& support_loss,
                                     const ad::ParamSet* metasgd_alpha = nullptr);

struct TrainerConfig {
  nn::MlpConfig model;
  meta::AdaptConfig adapt;
  std::optional<SimtConfig> simt;
  AdamConfig adam;
  uint64_t seed = 0;
};

struct TrainState {
  ad::ParamSet theta;
  MomentumState momentum;
  AdamState adam_theta;
  ad::ParamSet metasgd_alpha;  // empty unless MetaSGD
  AdamState adam_alpha;
  int64_t step = 0;
};

TrainState make_train_state(const TrainerConfig& cfg);

struct StepMetrics {
  double task_loss = 0;
  double kd_loss = 0;
  double total_loss = 0;
  double accuracy = 0;  // query accuracy (classification) or task loss
  double lambda_eff = 0;
};

struct StepDebug {
  // Max |d total / d theta_moment| per task; the stop-gradient contract
  // makes these exactly zero.
  std::vector<double> momentum_grad_abs_max;
};

// One Algorithm-1 step over a batch of tasks: generate momentum targets,
// adapt solvers, perturb, combine the two loss terms, average over tasks,
// take one Adam step, then update the momentum network.
StepMetrics simt_train_step(TrainState& state, std::span<const tasks::Episode> batch,
                            const TrainerConfig& cfg, StepDebug* debug = nullptr);

struct EvalStats {
  double mean_loss = 0, std_loss = 0, ci95_loss = 0;
  double mean_acc = 0, std_acc = 0, ci95_acc = 0;
  // Mean max-softmax confidence of adapted solvers (classification only).
  double conf_query = 0, conf_support = 0;
  int64_t n = 0;
};

// Post-adaptation performance of `network` over episodes; adaptation uses
// `steps` first-order inner steps (ProtoNet ignores it) and no dropout.
EvalStats evaluate_network(const ad::ParamSet& network, const ad::ParamSet* metasgd_alpha,
                           std::span<const tasks::Episode> episodes, const TrainerConfig& cfg,
                           int steps);

}  // namespace simt::engine
