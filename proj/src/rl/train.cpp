#include "simt/rl/train.hpp"

#include <cmath>

#include "simt/errors.hpp"
#include "simt/grad.hpp"

namespace simt::rl {

namespace {

using ad::Graph;
using ad::NodeId;
using ad::ParamNodes;
using ad::ParamSet;

struct TaskData {
  std::array<double, 2> goal;
  PairBatch support;
  std::vector<double> adv_s;
  PairBatch query;
  std::vector<double> adv_q;
  ParamSet phi_old;     // adapted policy the query rollouts were sampled from
  ParamSet phi_moment;  // frozen teacher (empty when distillation is off)
  std::vector<double> fisher_states;
  int64_t fisher_n = 0;
};

double mean_return(std::span<const Trajectory> trajs) {
  double r = 0;
  for (const auto& t : trajs) r += t.undiscounted_return();
  return r / static_cast<double>(trajs.size());
}

void mean_std(std::span<const double> xs, double& mean, double& sd) {
  mean = sd = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  for (double x : xs) sd += (x - mean) * (x - mean);
  sd = xs.size() > 1 ? std::sqrt(sd / static_cast<double>(xs.size() - 1)) : 0.0;
}

// Per-pair surrogate + distillation value at candidate meta-parameters.
double task_total_value(const RlConfig& cfg, const TaskData& td, const ParamSet& theta,
                        double lam) {
  ParamSet phi = pg_adapt_values(cfg.policy, theta, td.support, td.adv_s, cfg.inner_alpha);
  std::vector<double> mu(td.query.count * cfg.policy.output_dim);
  nn::mlp_forward_values(cfg.policy, phi, td.query.states.data(), td.query.count, mu.data());
  const auto& log_std = phi.at(kLogStdName).data;
  double surr = 0;
  for (int64_t i = 0; i < td.query.count; ++i) {
    const double lp = gaussian_logprob_value(mu.data() + i * cfg.policy.output_dim,
                                             log_std.data(),
                                             td.query.actions.data() + i * cfg.policy.output_dim,
                                             cfg.policy.output_dim);
    surr += std::exp(lp - td.query.log_probs[i]) * td.adv_q[i];
  }
  surr = -surr / static_cast<double>(td.query.count);
  if (lam <= 0.0) return surr;
  const double kd = avg_policy_kl_value(cfg.policy, phi, td.phi_moment, td.query.states,
                                        td.query.count);
  return (1.0 - lam) * surr + lam * kd;
}

}  // namespace

RlState make_rl_state(const RlConfig& cfg) {
  RlState s;
  s.theta = init_policy(cfg.policy);
  s.momentum = engine::make_momentum(s.theta, cfg.simt ? cfg.simt->eta : 0.995);
  return s;
}

RlIterStats rl_train_iteration(RlState& state, const RlConfig& cfg) {
  const double lam = cfg.simt ? engine::lambda_effective(*cfg.simt, state.iter) : 0.0;
  const int64_t n_tasks = cfg.task_batch;

  RlIterStats stats;
  stats.iter = state.iter;
  stats.lambda_eff = lam;

  std::vector<TaskData> tasks(n_tasks);
  std::vector<std::vector<double>> grad_acc(state.theta.size());
  for (size_t e = 0; e < state.theta.size(); ++e)
    grad_acc[e].assign(state.theta.entry(e).shape.numel(), 0.0);

  std::vector<double> pre_returns, post_returns;

  for (int64_t ti = 0; ti < n_tasks; ++ti) {
    TaskData& td = tasks[ti];
    Rng task_rng = Rng::stream(cfg.seed + 0x517cc1b727220a95ull,
                               static_cast<uint64_t>(state.iter) * 1000003ull + ti);
    td.goal = {task_rng.uniform(cfg.goal_lo, cfg.goal_hi),
               task_rng.uniform(cfg.goal_lo, cfg.goal_hi)};

    auto support_trajs =
        collect_rollouts(cfg.policy, state.theta, td.goal, cfg.horizon, cfg.rollouts, task_rng);
    LinearBaseline bl_s = baseline_fit(support_trajs, cfg.gae.gamma);
    fill_values(support_trajs, bl_s);
    td.support = flatten_pairs(support_trajs);
    td.adv_s = gae_advantages_flat(support_trajs, cfg.gae);
    if (cfg.standardize_advantages) standardize(td.adv_s);
    pre_returns.push_back(mean_return(support_trajs));

    if (lam > 0.0 && !cfg.target_from_query)
      td.phi_moment = pg_adapt_values(cfg.policy, state.momentum.theta_moment, td.support,
                                      td.adv_s, cfg.inner_alpha);

    Graph g;
    ParamNodes tn = bind(g, state.theta);
    ParamNodes phi = pg_adapt(g, cfg.policy, tn, td.support, td.adv_s, cfg.inner_alpha,
                              /*create_graph=*/true);
    td.phi_old = read_values(g, phi, state.theta);

    auto query_trajs =
        collect_rollouts(cfg.policy, td.phi_old, td.goal, cfg.horizon, cfg.rollouts, task_rng);
    LinearBaseline bl_q = baseline_fit(query_trajs, cfg.gae.gamma);
    fill_values(query_trajs, bl_q);
    td.query = flatten_pairs(query_trajs);
    td.adv_q = gae_advantages_flat(query_trajs, cfg.gae);
    if (cfg.standardize_advantages) standardize(td.adv_q);
    post_returns.push_back(mean_return(query_trajs));

    if (lam > 0.0 && cfg.target_from_query)
      td.phi_moment = pg_adapt_values(cfg.policy, state.momentum.theta_moment, td.query,
                                      td.adv_q, cfg.inner_alpha);

    NodeId surr = trpo_surrogate(g, cfg.policy, phi, td.query, td.adv_q);
    NodeId total = surr;
    double kd_val = 0.0;
    if (lam > 0.0) {
      NodeId kd = kd_rl_loss(g, cfg.policy, phi, td.phi_moment, td.query.states, td.query.count);
      kd_val = g.scalar(kd);
      total = engine::hybrid_loss(g, surr, kd, lam);
    }
    if (!std::isfinite(g.scalar(total)))
      throw NumericError("rl_train_iteration: non-finite loss at task " + std::to_string(ti));

    auto gs = ad::grad(g, total, tn.nodes, false);
    for (size_t e = 0; e < grad_acc.size(); ++e) {
      auto v = g.value(gs[e]);
      for (size_t i = 0; i < v.size(); ++i) grad_acc[e][i] += v[i];
    }

    stats.surrogate += g.scalar(surr);
    stats.kd += kd_val;
    stats.total += g.scalar(total);

    // Strided subset of query states for Fisher-vector products.
    const int64_t stride =
        cfg.fisher_subsample >= 1.0
            ? 1
            : std::max<int64_t>(1, static_cast<int64_t>(std::llround(1.0 / cfg.fisher_subsample)));
    for (int64_t i = 0; i < td.query.count; i += stride) {
      td.fisher_states.push_back(td.query.states[i * 2]);
      td.fisher_states.push_back(td.query.states[i * 2 + 1]);
      ++td.fisher_n;
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n_tasks);
  stats.surrogate *= inv_n;
  stats.kd *= inv_n;
  stats.total *= inv_n;
  mean_std(pre_returns, stats.pre_return, stats.pre_return_std);
  mean_std(post_returns, stats.post_return, stats.post_return_std);

  ParamSet g_mean;
  for (size_t e = 0; e < state.theta.size(); ++e) {
    auto& buf = grad_acc[e];
    for (auto& v : buf) v *= inv_n;
    g_mean.add(state.theta.entry(e).name, state.theta.entry(e).shape, std::move(buf));
  }

  TrpoProblem problem;
  problem.loss_value = [&](const ParamSet& th) {
    double total = 0;
    for (const auto& td : tasks) total += task_total_value(cfg, td, th, lam);
    return total * inv_n;
  };
  problem.loss_grad = [&](const ParamSet&) { return g_mean; };
  problem.kl_to_old = [&](const ParamSet& th) {
    double kl = 0;
    for (const auto& td : tasks) {
      ParamSet phi = pg_adapt_values(cfg.policy, th, td.support, td.adv_s, cfg.inner_alpha);
      kl += avg_policy_kl_value(cfg.policy, td.phi_old, phi, td.query.states, td.query.count);
    }
    return kl * inv_n;
  };
  problem.fisher_vp = [&](const ParamSet& v) {
    ParamSet acc;
    for (const auto& e : state.theta) acc.add_zeros(e.name, e.shape);
    for (const auto& td : tasks) {
      Graph g;
      ParamNodes tn = bind(g, state.theta);
      ParamNodes phi = pg_adapt(g, cfg.policy, tn, td.support, td.adv_s, cfg.inner_alpha, true);
      NodeId kl = avg_policy_kl_node(g, cfg.policy, td.phi_old, phi, td.fisher_states,
                                     td.fisher_n);
      auto gkl = ad::grad(g, kl, tn.nodes, /*create_graph=*/true);
      NodeId dot_node = ad::kNoNode;
      for (size_t e = 0; e < tn.nodes.size(); ++e) {
        NodeId vc = g.constant(state.theta.entry(e).shape, v.entry(e).data);
        NodeId term = ad::sum(g, ad::mul(g, gkl[e], vc));
        dot_node = dot_node == ad::kNoNode ? term : ad::add(g, dot_node, term);
      }
      auto hv = ad::grad(g, dot_node, tn.nodes, false);
      for (size_t e = 0; e < acc.size(); ++e) {
        auto hvv = g.value(hv[e]);
        auto& a = acc.entry(e).data;
        for (size_t i = 0; i < a.size(); ++i) a[i] += hvv[i];
      }
    }
    for (size_t e = 0; e < acc.size(); ++e)
      for (auto& x : acc.entry(e).data) x *= inv_n;
    return acc;
  };

  state.theta = trpo_meta_update(state.theta, problem, cfg.trpo, &stats.trpo);
  if (cfg.simt) engine::ema_update(state.momentum, state.theta);  // after the meta-update
  state.iter += 1;

  if (!state.has_best || stats.post_return > state.best_return) {
    state.has_best = true;
    state.best_return = stats.post_return;
    state.best_theta = state.theta;
    state.best_moment = state.momentum.theta_moment;
  }
  return stats;
}

RlEvalCurve rl_evaluate(const RlConfig& cfg, const ParamSet& policy, int64_t n_tasks,
                        int adapt_steps, uint64_t eval_seed) {
  std::vector<std::vector<double>> returns(adapt_steps + 1);
  for (int64_t ti = 0; ti < n_tasks; ++ti) {
    Rng rng = Rng::stream(eval_seed + 0x2545f4914f6cdd1dull, ti);
    const std::array<double, 2> goal = {rng.uniform(cfg.goal_lo, cfg.goal_hi),
                                        rng.uniform(cfg.goal_lo, cfg.goal_hi)};
    ParamSet cur = policy;
    for (int s = 0; s <= adapt_steps; ++s) {
      auto trajs = collect_rollouts(cfg.policy, cur, goal, cfg.horizon, cfg.rollouts, rng);
      returns[s].push_back(mean_return(trajs));
      if (s == adapt_steps) break;
      LinearBaseline bl = baseline_fit(trajs, cfg.gae.gamma);
      fill_values(trajs, bl);
      PairBatch pairs = flatten_pairs(trajs);
      std::vector<double> adv = gae_advantages_flat(trajs, cfg.gae);
      if (cfg.standardize_advantages) standardize(adv);
      const double alpha = s == 0 ? cfg.inner_alpha : cfg.eval_alpha_rest;
      cur = pg_adapt_values(cfg.policy, cur, pairs, adv, alpha);
    }
  }
  RlEvalCurve curve;
  curve.mean_return.resize(adapt_steps + 1);
  curve.std_return.resize(adapt_steps + 1);
  for (int s = 0; s <= adapt_steps; ++s)
    mean_std(returns[s], curve.mean_return[s], curve.std_return[s]);
  return curve;
}

}  // namespace simt::rl
