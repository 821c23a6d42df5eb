#include "simt/rl/policy.hpp"

#include <cmath>

namespace simt::rl {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

ad::ParamSet init_policy(const nn::MlpConfig& mlp) {
  ad::ParamSet p = nn::init_params(mlp);
  p.add_zeros(kLogStdName, ad::Shape{mlp.output_dim});  // sigma = 1 initially
  return p;
}

double gaussian_logprob_value(const double* mu, const double* log_std, const double* action,
                              int64_t dim) {
  double lp = 0;
  for (int64_t d = 0; d < dim; ++d) {
    const double inv_sigma = std::exp(-log_std[d]);
    const double z = (action[d] - mu[d]) * inv_sigma;
    lp += -0.5 * z * z - log_std[d] - 0.5 * kLog2Pi;
  }
  return lp;
}

std::vector<Trajectory> collect_rollouts(const nn::MlpConfig& cfg, const ad::ParamSet& policy,
                                         std::array<double, 2> goal, int horizon, int64_t k,
                                         Rng& rng) {
  const int64_t adim = cfg.output_dim;
  const auto& log_std = policy.at(kLogStdName).data;
  std::vector<double> sigma(adim);
  for (int64_t d = 0; d < adim; ++d) sigma[d] = std::exp(log_std[d]);

  std::vector<Trajectory> trajs(k);
  std::vector<NavEnv> envs(k, NavEnv(goal, horizon));
  std::vector<int64_t> active(k);
  for (int64_t i = 0; i < k; ++i) active[i] = i;

  std::vector<double> states, means, action(adim);
  while (!active.empty()) {
    states.resize(active.size() * 2);
    for (size_t j = 0; j < active.size(); ++j) {
      const auto& pos = envs[active[j]].position();
      states[j * 2] = pos[0];
      states[j * 2 + 1] = pos[1];
    }
    means.resize(active.size() * adim);
    nn::mlp_forward_values(cfg, policy, states.data(), static_cast<int64_t>(active.size()),
                           means.data());

    std::vector<int64_t> still;
    for (size_t j = 0; j < active.size(); ++j) {
      const int64_t i = active[j];
      Trajectory& tr = trajs[i];
      const double* mu = means.data() + j * adim;
      for (int64_t d = 0; d < adim; ++d) action[d] = mu[d] + sigma[d] * rng.normal();
      tr.states.insert(tr.states.end(), states.begin() + j * 2, states.begin() + j * 2 + 2);
      tr.actions.insert(tr.actions.end(), action.begin(), action.end());
      tr.log_probs.push_back(gaussian_logprob_value(mu, log_std.data(), action.data(), adim));
      tr.rewards.push_back(envs[i].step(action.data()));
      if (envs[i].done())
        tr.terminated = envs[i].at_goal();
      else
        still.push_back(i);
    }
    active.swap(still);
  }
  return trajs;
}

ad::NodeId policy_logprob_rows(ad::Graph& g, const nn::MlpConfig& cfg,
                               const ad::ParamNodes& policy, ad::NodeId states,
                               std::span<const double> actions) {
  const int64_t n = g.shape(states)[0];
  const int64_t adim = cfg.output_dim;
  ad::NodeId mu = nn::mlp_forward(g, cfg, policy, states);
  ad::NodeId log_std = policy.at(kLogStdName);
  ad::NodeId a = g.constant(ad::Shape{n, adim}, actions);
  ad::NodeId z = ad::mul(g, ad::sub(g, a, mu), ad::exp_op(g, ad::neg(g, log_std)));
  ad::NodeId quad = ad::scale(g, ad::sum_axis(g, ad::square(g, z), 1), -0.5);
  ad::NodeId norm = ad::affine(g, ad::sum(g, log_std), -1.0,
                               -0.5 * kLog2Pi * static_cast<double>(adim));
  return ad::add(g, quad, norm);
}

ad::NodeId gaussian_logprob(ad::Graph& g, const nn::MlpConfig& cfg, const ad::ParamNodes& policy,
                            std::span<const double> state, std::span<const double> action) {
  ad::NodeId s = g.constant(ad::Shape{1, static_cast<int64_t>(state.size())}, state);
  return ad::sum(g, policy_logprob_rows(g, cfg, policy, s, action));
}

ad::NodeId gaussian_kl_rows(ad::Graph& g, ad::NodeId mu_p, ad::NodeId log_std_p, ad::NodeId mu_q,
                            ad::NodeId log_std_q) {
  const ad::Shape ms = g.shape(mu_p);
  if (ms != g.shape(mu_q) || g.shape(log_std_p) != g.shape(log_std_q))
    throw ShapeError("gaussian_kl_rows: operand shapes disagree");
  const int64_t adim = ms[ms.rank() - 1];
  // KL = sum_d [ lsq - lsp + (sig_p^2 + (mu_p - mu_q)^2) / (2 sig_q^2) - 1/2 ]
  ad::NodeId lterm = ad::sum(g, ad::sub(g, log_std_q, log_std_p));
  ad::NodeId var_p = ad::exp_op(g, ad::scale(g, log_std_p, 2.0));
  ad::NodeId inv_var_q = ad::exp_op(g, ad::scale(g, log_std_q, -2.0));
  ad::NodeId msq = ad::square(g, ad::sub(g, mu_p, mu_q));
  ad::NodeId inner = ad::mul(g, ad::add(g, msq, var_p), inv_var_q);
  ad::NodeId half = ad::scale(g, ad::sum_axis(g, inner, ms.rank() - 1), 0.5);
  return ad::affine(g, ad::add(g, half, lterm), 1.0, -0.5 * static_cast<double>(adim));
}

PairBatch flatten_pairs(std::span<const Trajectory> trajs) {
  PairBatch b;
  for (const auto& tr : trajs) {
    b.states.insert(b.states.end(), tr.states.begin(), tr.states.end());
    b.actions.insert(b.actions.end(), tr.actions.begin(), tr.actions.end());
    b.log_probs.insert(b.log_probs.end(), tr.log_probs.begin(), tr.log_probs.end());
    b.count += tr.length();
  }
  return b;
}

}  // namespace simt::rl
