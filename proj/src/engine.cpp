#include "simt/engine.hpp"

#include <algorithm>
#include <cmath>

#include "simt/errors.hpp"

namespace simt::engine {

namespace {

using ad::Graph;
using ad::NodeId;
using ad::ParamNodes;
using ad::ParamSet;
using tasks::Episode;
using tasks::TaskKind;

NodeId bind_input(Graph& g, const Episode& ep, bool query) {
  const auto& x = query ? ep.xq : ep.xs;
  const int64_t n = query ? ep.n_query : ep.n_support;
  return g.constant(ad::Shape{n, ep.input_dim}, x);
}

NodeId loss_for(Graph& g, const Episode& ep, NodeId outputs, bool query) {
  switch (ep.kind) {
    case TaskKind::kRegressionMse:
      return tasks::mse_loss(g, outputs, query ? ep.yq : ep.ys);
    case TaskKind::kRegressionAngular:
      return tasks::angular_loss(g, outputs, query ? ep.yq : ep.ys);
    case TaskKind::kClassification:
      return tasks::ce_loss(g, outputs, query ? ep.query_labels : ep.support_labels);
  }
  throw Error("unknown task kind");
}

// Adapts from the given parameter nodes, dispatching on the solver kind.
meta::Solver adapt_solver(Graph& g, const nn::MlpConfig& model, const meta::AdaptConfig& cfg,
                          const ParamNodes& params, const Episode& ep,
                          const ParamNodes* metasgd_alpha, std::optional<int> override_steps) {
  if (cfg.kind == meta::AdaptKind::kProtonet) {
    meta::EmbedFn embed = [&model](Graph& gg, const ParamNodes& p, NodeId x) {
      return nn::mlp_forward(gg, model, p, x);
    };
    return meta::adapt_protonet(g, params, embed, bind_input(g, ep, false), ep.support_labels);
  }
  meta::LossFn support_loss = [&](Graph& gg, const ParamNodes& p) {
    NodeId out = nn::mlp_forward(gg, model, p, bind_input(gg, ep, false));
    return loss_for(gg, ep, out, false);
  };
  return meta::adapt_gradient(g, params, support_loss, cfg, metasgd_alpha, override_steps);
}

// Model outputs of a solver on support or query inputs, with optional
// dropout perturbation of the solver's hidden activations.
NodeId solver_outputs(Graph& g, const nn::MlpConfig& model, const meta::Solver& solver,
                      const Episode& ep, bool query, const nn::DropoutSpec* dropout,
                      Rng* mask_rng) {
  NodeId x = bind_input(g, ep, query);
  if (solver.kind == meta::AdaptKind::kProtonet) {
    NodeId emb = (dropout && dropout->p > 0)
                     ? nn::mlp_forward(g, model, solver.params, x, *dropout, *mask_rng)
                     : nn::mlp_forward(g, model, solver.params, x);
    return meta::protonet_logits(g, solver, emb);
  }
  return (dropout && dropout->p > 0)
             ? nn::mlp_forward(g, model, solver.params, x, *dropout, *mask_rng)
             : nn::mlp_forward(g, model, solver.params, x);
}

}  // namespace

AdamState make_adam_state(const ParamSet& params) {
  AdamState s;
  for (const auto& e : params) {
    s.m.add_zeros(e.name, e.shape);
    s.v.add_zeros(e.name, e.shape);
  }
  return s;
}

void adam_step(ParamSet& params, AdamState& state, const AdamConfig& cfg, const ParamSet& grad) {
  if (!params.compatible(grad)) throw Error("adam_step: gradient incompatible with parameters");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t e = 0; e < params.size(); ++e) {
    auto& p = params.entry(e).data;
    auto& m = state.m.entry(e).data;
    auto& v = state.v.entry(e).data;
    const auto& gr = grad.entry(e).data;
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gr[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gr[i] * gr[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

MomentumState make_momentum(const ParamSet& theta, double eta) {
  if (eta < 0.0 || eta >= 1.0) throw Error("momentum: eta must be in [0,1)");
  return MomentumState{theta, eta};
}

void ema_update(MomentumState& state, const ParamSet& theta) {
  if (!state.theta_moment.compatible(theta))
    throw Error("ema_update: incompatible parameter sets");
  const double eta = state.eta;
  for (size_t e = 0; e < theta.size(); ++e) {
    auto& m = state.theta_moment.entry(e).data;
    const auto& t = theta.entry(e).data;
    for (size_t i = 0; i < m.size(); ++i) m[i] = eta * m[i] + (1.0 - eta) * t[i];
  }
}

double lambda_effective(const SimtConfig& cfg, int64_t step) {
  if (cfg.lambda_rampup_steps <= 0) return cfg.lambda;
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.lambda_rampup_steps);
  return cfg.lambda * std::min(1.0, frac);
}

NodeId kd_loss_regression(Graph& g, NodeId student_out, NodeId target_out) {
  if (g.shape(student_out) != g.shape(target_out))
    throw ShapeError("kd_loss_regression: shape mismatch " + g.shape(student_out).str() + " vs " +
                     g.shape(target_out).str());
  const ad::Shape s = g.shape(student_out);
  const int64_t rows = s.rank() >= 1 ? s[0] : 1;
  NodeId diff = ad::sub(g, student_out, g.detach(target_out));
  return ad::scale(g, ad::sum(g, ad::square(g, diff)), 1.0 / static_cast<double>(rows));
}

NodeId kd_loss_classification(Graph& g, NodeId student_logits, NodeId target_logits,
                              double temperature) {
  if (temperature <= 0.0) throw Error("kd_loss_classification: temperature must be > 0");
  if (g.shape(student_logits) != g.shape(target_logits))
    throw ShapeError("kd_loss_classification: shape mismatch " + g.shape(student_logits).str() +
                     " vs " + g.shape(target_logits).str());
  const int last = g.shape(student_logits).rank() - 1;
  NodeId zt = ad::scale(g, g.detach(target_logits), 1.0 / temperature);
  NodeId zs = ad::scale(g, student_logits, 1.0 / temperature);
  NodeId p = ad::softmax_last(g, zt);
  NodeId row_kl = ad::sum_axis(
      g, ad::mul(g, p, ad::sub(g, ad::log_softmax_last(g, zt), ad::log_softmax_last(g, zs))),
      last);
  return ad::scale(g, ad::mean(g, row_kl), temperature * temperature);
}

NodeId hybrid_loss(Graph& g, NodeId task_term, NodeId kd_term, double lambda_eff) {
  if (lambda_eff < 0.0 || lambda_eff >= 1.0) throw Error("hybrid_loss: lambda must be in [0,1)");
  return ad::add(g, ad::scale(g, task_term, 1.0 - lambda_eff), ad::scale(g, kd_term, lambda_eff));
}

MomentumTargetResult momentum_target(Graph& g, const ParamSet& theta_moment,
                                     const meta::AdaptConfig& student_cfg,
                                     const meta::LossFn& support_loss,
                                     const ParamSet* metasgd_alpha) {
  MomentumTargetResult out;
  ParamNodes moment_nodes = bind(g, theta_moment, /*requires_grad=*/false);
  out.theta_moment_nodes = moment_nodes.nodes;

  meta::AdaptConfig cfg = student_cfg;
  cfg.second_order = false;  // the teacher never needs second-order gradients

  if (student_cfg.kind == meta::AdaptKind::kProtonet)
    throw Error("momentum_target: protonet targets go through momentum_target_protonet");

  std::optional<ParamNodes> alpha_nodes;
  if (metasgd_alpha)
    alpha_nodes = bind(g, *metasgd_alpha, /*requires_grad=*/false);
  out.solver = meta::adapt_gradient(g, moment_nodes, support_loss, cfg,
                                    alpha_nodes ? &*alpha_nodes : nullptr);
  // Stop-gradient: freeze the adapted teacher parameters.
  for (auto& n : out.solver.params.nodes) n = g.detach(n);
  return out;
}

TrainState make_train_state(const TrainerConfig& cfg) {
  TrainState s;
  s.theta = nn::init_params(cfg.model);
  s.momentum = make_momentum(s.theta, cfg.simt ? cfg.simt->eta : 0.995);
  s.adam_theta = make_adam_state(s.theta);
  if (cfg.adapt.kind == meta::AdaptKind::kMetaSgd) {
    for (const auto& e : s.theta)
      s.metasgd_alpha.add(e.name, e.shape,
                          std::vector<double>(e.shape.numel(), cfg.adapt.alpha));
    s.adam_alpha = make_adam_state(s.metasgd_alpha);
  }
  return s;
}

StepMetrics simt_train_step(TrainState& state, std::span<const Episode> batch,
                            const TrainerConfig& cfg, StepDebug* debug) {
  if (batch.empty()) throw Error("simt_train_step: empty task batch");
  const bool metasgd = cfg.adapt.kind == meta::AdaptKind::kMetaSgd;
  const bool protonet = cfg.adapt.kind == meta::AdaptKind::kProtonet;
  const double lam = cfg.simt ? lambda_effective(*cfg.simt, state.step) : 0.0;
  const bool use_dropout = cfg.simt && cfg.simt->dropout.p > 0.0;

  std::vector<std::vector<double>> theta_grad(state.theta.size());
  for (size_t e = 0; e < state.theta.size(); ++e)
    theta_grad[e].assign(state.theta.entry(e).shape.numel(), 0.0);
  std::vector<std::vector<double>> alpha_grad(state.metasgd_alpha.size());
  for (size_t e = 0; e < state.metasgd_alpha.size(); ++e)
    alpha_grad[e].assign(state.metasgd_alpha.entry(e).shape.numel(), 0.0);

  StepMetrics metrics;
  metrics.lambda_eff = lam;

  for (size_t ti = 0; ti < batch.size(); ++ti) {
    const Episode& ep = batch[ti];
    Graph g;
    ParamNodes th = bind(g, state.theta);
    std::optional<ParamNodes> alpha_nodes;
    if (metasgd) alpha_nodes = bind(g, state.metasgd_alpha);

    meta::Solver phi = adapt_solver(g, cfg.model, cfg.adapt, th, ep,
                                    alpha_nodes ? &*alpha_nodes : nullptr, std::nullopt);

    Rng mask_rng = Rng::stream(cfg.seed ^ (cfg.simt ? cfg.simt->dropout.seed : 0),
                               static_cast<uint64_t>(state.step) * 1000003ull + ti);
    const nn::DropoutSpec* dropout = use_dropout ? &cfg.simt->dropout : nullptr;

    NodeId student_q = solver_outputs(g, cfg.model, phi, ep, /*query=*/true, dropout, &mask_rng);
    NodeId task_term;
    if (use_dropout && !cfg.simt->dropout_on_task_term) {
      NodeId clean_q = solver_outputs(g, cfg.model, phi, ep, true, nullptr, nullptr);
      task_term = loss_for(g, ep, clean_q, true);
    } else {
      task_term = loss_for(g, ep, student_q, true);
    }

    NodeId total = task_term;
    double kd_val = 0.0;
    std::vector<NodeId> moment_nodes;
    if (lam > 0.0) {
      MomentumTargetResult target;
      if (protonet) {
        ParamNodes moment = bind(g, state.momentum.theta_moment, false);
        meta::EmbedFn embed = [&cfg](Graph& gg, const ParamNodes& p, NodeId x) {
          return nn::mlp_forward(gg, cfg.model, p, x);
        };
        target.solver =
            meta::adapt_protonet(g, moment, embed, bind_input(g, ep, false), ep.support_labels);
        target.solver.prototypes = g.detach(target.solver.prototypes);
        target.theta_moment_nodes = moment.nodes;
      } else {
        meta::LossFn support_loss = [&](Graph& gg, const ParamNodes& p) {
          NodeId out = nn::mlp_forward(gg, cfg.model, p, bind_input(gg, ep, false));
          return loss_for(gg, ep, out, false);
        };
        target = momentum_target(g, state.momentum.theta_moment, cfg.adapt, support_loss,
                                 metasgd ? &state.metasgd_alpha : nullptr);
      }
      moment_nodes = target.theta_moment_nodes;

      const bool on_support = cfg.simt->teach_on_support;
      NodeId student_kd = on_support
                              ? solver_outputs(g, cfg.model, phi, ep, false, dropout, &mask_rng)
                              : student_q;
      NodeId target_out =
          solver_outputs(g, cfg.model, target.solver, ep, !on_support, nullptr, nullptr);

      NodeId kd_term = ep.kind == TaskKind::kClassification
                           ? kd_loss_classification(g, student_kd, target_out,
                                                    cfg.simt->temperature)
                           : kd_loss_regression(g, student_kd, target_out);
      kd_val = g.scalar(kd_term);
      total = hybrid_loss(g, task_term, kd_term, lam);
    }

    const double total_val = g.scalar(total);
    if (!std::isfinite(total_val))
      throw NumericError("simt_train_step: non-finite loss at task " + std::to_string(ti) +
                         " (task term " + std::to_string(g.scalar(task_term)) + ", kd term " +
                         std::to_string(kd_val) + ")");

    if (debug && !moment_nodes.empty()) {
      auto mg = ad::grad(g, total, moment_nodes, false);
      double worst = 0.0;
      for (NodeId n : mg)
        for (double v : g.value(n)) worst = std::max(worst, std::fabs(v));
      debug->momentum_grad_abs_max.push_back(worst);
    }

    std::vector<NodeId> wrt = th.nodes;
    if (metasgd) wrt.insert(wrt.end(), alpha_nodes->nodes.begin(), alpha_nodes->nodes.end());
    auto gs = ad::grad(g, total, wrt, false);
    for (size_t e = 0; e < state.theta.size(); ++e) {
      auto v = g.value(gs[e]);
      for (size_t i = 0; i < v.size(); ++i) theta_grad[e][i] += v[i];
    }
    if (metasgd) {
      for (size_t e = 0; e < state.metasgd_alpha.size(); ++e) {
        auto v = g.value(gs[state.theta.size() + e]);
        for (size_t i = 0; i < v.size(); ++i) alpha_grad[e][i] += v[i];
      }
    }

    metrics.task_loss += g.scalar(task_term);
    metrics.kd_loss += kd_val;
    metrics.total_loss += total_val;
    if (ep.kind == TaskKind::kClassification)
      metrics.accuracy += tasks::accuracy(g, student_q, ep.query_labels);
    else
      metrics.accuracy += g.scalar(task_term);
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  metrics.task_loss *= inv_n;
  metrics.kd_loss *= inv_n;
  metrics.total_loss *= inv_n;
  metrics.accuracy *= inv_n;

  ParamSet tg;
  for (size_t e = 0; e < state.theta.size(); ++e) {
    auto& buf = theta_grad[e];
    for (auto& v : buf) v *= inv_n;
    tg.add(state.theta.entry(e).name, state.theta.entry(e).shape, std::move(buf));
  }
  adam_step(state.theta, state.adam_theta, cfg.adam, tg);
  if (metasgd) {
    ParamSet ag;
    for (size_t e = 0; e < state.metasgd_alpha.size(); ++e) {
      auto& buf = alpha_grad[e];
      for (auto& v : buf) v *= inv_n;
      ag.add(state.metasgd_alpha.entry(e).name, state.metasgd_alpha.entry(e).shape,
             std::move(buf));
    }
    adam_step(state.metasgd_alpha, state.adam_alpha, cfg.adam, ag);
  }
  if (cfg.simt) ema_update(state.momentum, state.theta);  // strictly after the theta update
  state.step += 1;
  return metrics;
}

EvalStats evaluate_network(const ParamSet& network, const ParamSet* metasgd_alpha,
                           std::span<const Episode> episodes, const TrainerConfig& cfg,
                           int steps) {
  std::vector<double> losses, accs, conf_q, conf_s;
  meta::AdaptConfig eval_cfg = cfg.adapt;
  eval_cfg.second_order = false;  // adaptation values only, no meta-gradient

  for (const Episode& ep : episodes) {
    Graph g;
    ParamNodes th = bind(g, network, false);
    std::optional<ParamNodes> alpha_nodes;
    if (metasgd_alpha) alpha_nodes = bind(g, *metasgd_alpha, false);
    meta::Solver phi = adapt_solver(g, cfg.model, eval_cfg, th, ep,
                                    alpha_nodes ? &*alpha_nodes : nullptr, steps);
    NodeId out_q = solver_outputs(g, cfg.model, phi, ep, true, nullptr, nullptr);
    NodeId loss = loss_for(g, ep, out_q, true);
    losses.push_back(g.scalar(loss));
    if (ep.kind == TaskKind::kClassification) {
      accs.push_back(tasks::accuracy(g, out_q, ep.query_labels));
      NodeId probs_q = ad::softmax_last(g, out_q);
      NodeId mx_q = ad::max_axis(g, probs_q, 1);
      conf_q.push_back(g.scalar(ad::mean(g, mx_q)));
      NodeId out_s = solver_outputs(g, cfg.model, phi, ep, false, nullptr, nullptr);
      NodeId mx_s = ad::max_axis(g, ad::softmax_last(g, out_s), 1);
      conf_s.push_back(g.scalar(ad::mean(g, mx_s)));
    }
  }

  auto summarize = [](const std::vector<double>& xs, double& mean, double& sd, double& ci) {
    mean = sd = ci = 0;
    if (xs.empty()) return;
    for (double x : xs) mean += x;
    mean /= xs.size();
    for (double x : xs) sd += (x - mean) * (x - mean);
    sd = xs.size() > 1 ? std::sqrt(sd / (xs.size() - 1)) : 0.0;
    ci = 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
  };

  EvalStats st;
  st.n = static_cast<int64_t>(losses.size());
  summarize(losses, st.mean_loss, st.std_loss, st.ci95_loss);
  summarize(accs, st.mean_acc, st.std_acc, st.ci95_acc);
  double dummy_sd, dummy_ci;
  summarize(conf_q, st.conf_query, dummy_sd, dummy_ci);
  summarize(conf_s, st.conf_support, dummy_sd, dummy_ci);
  return st;
}

}  // namespace simt::engine
