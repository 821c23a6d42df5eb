#include "simt/rl/trpo.hpp"

#include <cmath>

#include "simt/errors.hpp"
#include "simt/grad.hpp"

namespace simt::rl {

namespace {

ad::NodeId bind_states(ad::Graph& g, std::span<const double> states, int64_t n) {
  return g.constant(ad::Shape{n, 2}, states);
}

// theta-shaped flat vector helpers for the CG loop
double dot(const ad::ParamSet& a, const ad::ParamSet& b) {
  double s = 0;
  for (size_t e = 0; e < a.size(); ++e) {
    const auto& x = a.entry(e).data;
    const auto& y = b.entry(e).data;
    for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  }
  return s;
}

ad::ParamSet axpy(const ad::ParamSet& x, double alpha, const ad::ParamSet& y) {
  ad::ParamSet out = x;
  for (size_t e = 0; e < out.size(); ++e) {
    auto& o = out.entry(e).data;
    const auto& yv = y.entry(e).data;
    for (size_t i = 0; i < o.size(); ++i) o[i] += alpha * yv[i];
  }
  return out;
}

ad::ParamSet zeros_like(const ad::ParamSet& ref) {
  ad::ParamSet out;
  for (const auto& e : ref) out.add_zeros(e.name, e.shape);
  return out;
}

}  // namespace

ad::NodeId pg_loss(ad::Graph& g, const nn::MlpConfig& cfg, const ad::ParamNodes& policy,
                   const PairBatch& pairs, std::span<const double> advantages) {
  if (static_cast<int64_t>(advantages.size()) != pairs.count)
    throw Error("pg_loss: advantage count mismatch");
  ad::NodeId states = bind_states(g, pairs.states, pairs.count);
  ad::NodeId lp = policy_logprob_rows(g, cfg, policy, states, pairs.actions);
  ad::NodeId adv = g.constant(ad::Shape{pairs.count}, advantages);
  return ad::neg(g, ad::mean(g, ad::mul(g, lp, adv)));
}

ad::ParamNodes pg_adapt(ad::Graph& g, const nn::MlpConfig& cfg, const ad::ParamNodes& theta,
                        const PairBatch& pairs, std::span<const double> advantages, double alpha,
                        bool create_graph) {
  ad::NodeId loss = pg_loss(g, cfg, theta, pairs, advantages);
  if (!std::isfinite(g.scalar(loss))) throw NumericError("pg_adapt: non-finite inner loss");
  auto gs = ad::grad(g, loss, theta.nodes, create_graph);
  for (ad::NodeId gn : gs)
    for (double v : g.value(gn))
      if (!std::isfinite(v)) throw NumericError("pg_adapt: non-finite policy gradient");
  ad::ParamNodes out = theta;
  for (size_t e = 0; e < out.nodes.size(); ++e)
    out.nodes[e] = ad::sub(g, out.nodes[e], ad::scale(g, gs[e], alpha));
  return out;
}

ad::ParamSet pg_adapt_values(const nn::MlpConfig& cfg, const ad::ParamSet& theta,
                             const PairBatch& pairs, std::span<const double> advantages,
                             double alpha) {
  ad::Graph g;
  ad::ParamNodes tn = bind(g, theta);
  ad::ParamNodes phi = pg_adapt(g, cfg, tn, pairs, advantages, alpha, /*create_graph=*/false);
  return read_values(g, phi, theta);
}

ad::NodeId trpo_surrogate(ad::Graph& g, const nn::MlpConfig& cfg, const ad::ParamNodes& phi_new,
                          const PairBatch& query, std::span<const double> advantages) {
  if (static_cast<int64_t>(advantages.size()) != query.count)
    throw Error("trpo_surrogate: advantage count mismatch");
  ad::NodeId states = bind_states(g, query.states, query.count);
  ad::NodeId lp_new = policy_logprob_rows(g, cfg, phi_new, states, query.actions);
  ad::NodeId lp_old = g.constant(ad::Shape{query.count}, query.log_probs);
  ad::NodeId ratio = ad::exp_op(g, ad::sub(g, lp_new, lp_old));
  ad::NodeId adv = g.constant(ad::Shape{query.count}, advantages);
  return ad::neg(g, ad::mean(g, ad::mul(g, ratio, adv)));
}

ad::NodeId avg_policy_kl_node(ad::Graph& g, const nn::MlpConfig& cfg,
                              const ad::ParamSet& phi_old, const ad::ParamNodes& phi_new,
                              std::span<const double> states, int64_t n_states) {
  std::vector<double> mu_old(n_states * cfg.output_dim);
  nn::mlp_forward_values(cfg, phi_old, states.data(), n_states, mu_old.data());
  ad::NodeId mu_p = g.constant(ad::Shape{n_states, cfg.output_dim}, mu_old);
  ad::NodeId ls_p = g.constant(ad::Shape{cfg.output_dim}, phi_old.at(kLogStdName).data);
  ad::NodeId sn = bind_states(g, states, n_states);
  ad::NodeId mu_q = nn::mlp_forward(g, cfg, phi_new, sn);
  ad::NodeId ls_q = phi_new.at(kLogStdName);
  return ad::mean(g, gaussian_kl_rows(g, mu_p, ls_p, mu_q, ls_q));
}

double avg_policy_kl_value(const nn::MlpConfig& cfg, const ad::ParamSet& phi_old,
                           const ad::ParamSet& phi_new, std::span<const double> states,
                           int64_t n_states) {
  std::vector<double> mu_p(n_states * cfg.output_dim), mu_q(n_states * cfg.output_dim);
  nn::mlp_forward_values(cfg, phi_old, states.data(), n_states, mu_p.data());
  nn::mlp_forward_values(cfg, phi_new, states.data(), n_states, mu_q.data());
  const auto& lsp = phi_old.at(kLogStdName).data;
  const auto& lsq = phi_new.at(kLogStdName).data;
  const int64_t d = cfg.output_dim;
  double total = 0;
  for (int64_t r = 0; r < n_states; ++r) {
    double kl = 0;
    for (int64_t k = 0; k < d; ++k) {
      const double var_p = std::exp(2.0 * lsp[k]);
      const double inv_var_q = std::exp(-2.0 * lsq[k]);
      const double dm = mu_p[r * d + k] - mu_q[r * d + k];
      kl += lsq[k] - lsp[k] + 0.5 * (var_p + dm * dm) * inv_var_q - 0.5;
    }
    total += kl;
  }
  return total / static_cast<double>(n_states);
}

ad::NodeId kd_rl_loss(ad::Graph& g, const nn::MlpConfig& cfg, const ad::ParamNodes& phi,
                      const ad::ParamSet& phi_target, std::span<const double> states,
                      int64_t n_states) {
  ad::NodeId sn = bind_states(g, states, n_states);
  ad::NodeId mu_p = nn::mlp_forward(g, cfg, phi, sn);
  ad::NodeId ls_p = phi.at(kLogStdName);
  std::vector<double> mu_t(n_states * cfg.output_dim);
  nn::mlp_forward_values(cfg, phi_target, states.data(), n_states, mu_t.data());
  ad::NodeId mu_q = g.constant(ad::Shape{n_states, cfg.output_dim}, mu_t);
  ad::NodeId ls_q = g.constant(ad::Shape{cfg.output_dim}, phi_target.at(kLogStdName).data);
  return ad::mean(g, gaussian_kl_rows(g, mu_p, ls_p, mu_q, ls_q));
}

ad::ParamSet trpo_meta_update(const ad::ParamSet& theta, const TrpoProblem& problem,
                              const TrpoConfig& cfg, TrpoReport* report) {
  TrpoReport rep;
  rep.loss_before = problem.loss_value(theta);

  ad::ParamSet g = problem.loss_grad(theta);
  rep.grad_norm = std::sqrt(dot(g, g));
  if (!(rep.grad_norm > 1e-12)) {
    if (report) *report = rep;
    return theta;  // nothing to do
  }

  // CG on (F + damping I) x = g, keeping the best iterate by residual.
  ad::ParamSet x = zeros_like(theta);
  ad::ParamSet r = g;
  ad::ParamSet p = r;
  double rs = dot(r, r);
  ad::ParamSet best_x = x;
  double best_rs = rs;
  for (int it = 0; it < cfg.cg_iters && rs > 1e-20; ++it) {
    ad::ParamSet fp = axpy(problem.fisher_vp(p), cfg.cg_damping, p);
    const double pap = dot(p, fp);
    if (pap <= 0) break;  // numerical trouble; keep the best iterate so far
    const double alpha = rs / pap;
    x = axpy(x, alpha, p);
    r = axpy(r, -alpha, fp);
    const double rs_new = dot(r, r);
    if (rs_new < best_rs) {
      best_rs = rs_new;
      best_x = x;
    }
    p = axpy(r, rs_new / rs, p);
    rs = rs_new;
  }
  x = best_x;

  ad::ParamSet fx = axpy(problem.fisher_vp(x), cfg.cg_damping, x);
  const double xfx = dot(x, fx);
  if (xfx <= 0) {
    if (report) *report = rep;
    return theta;
  }
  const double full_scale = std::sqrt(2.0 * cfg.delta / xfx);

  double frac = 1.0;
  for (int bt = 0; bt < cfg.max_backtracks; ++bt, frac *= cfg.backtrack_ratio) {
    ad::ParamSet cand = axpy(theta, -frac * full_scale, x);
    const double kl = problem.kl_to_old(cand);
    const double loss = problem.loss_value(cand);
    if (std::isfinite(loss) && loss < rep.loss_before && kl <= cfg.delta) {
      rep.accepted = true;
      rep.kl = kl;
      rep.loss_after = loss;
      rep.backtracks = bt;
      if (report) *report = rep;
      return cand;
    }
  }
  rep.backtracks = cfg.max_backtracks;
  if (report) *report = rep;
  return theta;  // line search failed; parameters unchanged
}

}  // namespace simt::rl
