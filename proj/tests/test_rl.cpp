#include <cmath>
#include <cstring>

#include "doctest.h"
#include "simt/rl/train.hpp"

using namespace simt;
using namespace simt::ad;
using namespace simt::rl;

TEST_CASE("nav env: reward is negative squared distance after the move") {
  NavEnv env({0.0, 0.0}, 100);
  double a1[2] = {0.1, 0.1};
  env.step(a1);
  env.step(a1);
  env.step(a1);  // (0.3, 0.3)
  double a2[2] = {0.0, 0.1};
  const double r = env.step(a2);  // (0.3, 0.4)
  CHECK(env.position()[0] == doctest::Approx(0.3));
  CHECK(env.position()[1] == doctest::Approx(0.4));
  CHECK(r == doctest::Approx(-0.25).epsilon(1e-12));
}

TEST_CASE("nav env: actions clip to the [-0.1, 0.1] box") {
  NavEnv env({1.0, 1.0}, 100);
  double a[2] = {0.5, -0.7};
  env.step(a);
  CHECK(env.position()[0] == doctest::Approx(0.1));
  CHECK(env.position()[1] == doctest::Approx(-0.1));
}

TEST_CASE("nav env: done within 0.01 of the goal, stepping after done throws") {
  NavEnv env({0.105, 0.0}, 100);
  double a[2] = {0.1, 0.0};
  env.step(a);  // at (0.1, 0), distance 0.005
  CHECK(env.done());
  CHECK(env.at_goal());
  CHECK_THROWS_AS(env.step(a), Error);
}

TEST_CASE("nav env: horizon termination and reward sign") {
  NavEnv env({0.4, -0.3}, 5);
  Rng rng(3);
  int steps = 0;
  while (!env.done()) {
    double a[2] = {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)};
    const double r = env.step(a);
    CHECK(r <= 0.0);
    ++steps;
  }
  CHECK((env.at_goal() || env.t() == 5));
  CHECK(steps <= 5);
}

namespace {

nn::MlpConfig tiny_policy_cfg() { return {2, {}, 2, nn::Activation::kRelu, 0}; }

}  // namespace

TEST_CASE("gaussian logprob at the mode of a standard normal") {
  // zero-weight policy, bias = action => mu = a; log_std = 0
  auto cfg = tiny_policy_cfg();
  ParamSet p = init_policy(cfg);
  for (auto& v : p.at("layer0.weight").data) v = 0.0;
  p.at("layer0.bias").data = {0.3, -0.4};

  Graph g;
  ParamNodes pn = bind(g, p);
  NodeId lp = gaussian_logprob(g, cfg, pn, std::vector<double>{5.0, 5.0},
                               std::vector<double>{0.3, -0.4});
  CHECK(g.scalar(lp) == doctest::Approx(2 * -0.9189385332046727).epsilon(1e-12));

  // doubling sigma at the mode lowers logprob by ln 2 per dimension
  p.at(kLogStdName).data = {std::log(2.0), std::log(2.0)};
  Graph g2;
  ParamNodes pn2 = bind(g2, p);
  NodeId lp2 = gaussian_logprob(g2, cfg, pn2, std::vector<double>{5.0, 5.0},
                                std::vector<double>{0.3, -0.4});
  CHECK(g2.scalar(lp2) ==
        doctest::Approx(2 * (-0.9189385332046727 - std::log(2.0))).epsilon(1e-12));
}

TEST_CASE("gaussian logprob matches the closed-form density oracle") {
  Rng rng(7);
  auto cfg = tiny_policy_cfg();
  for (int trial = 0; trial < 20; ++trial) {
    ParamSet p = init_policy(cfg);
    for (auto& v : p.at("layer0.weight").data) v = rng.uniform(-1, 1);
    for (auto& v : p.at("layer0.bias").data) v = rng.uniform(-1, 1);
    for (auto& v : p.at(kLogStdName).data) v = rng.uniform(-1, 0.5);
    std::vector<double> state{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    std::vector<double> action{rng.uniform(-1, 1), rng.uniform(-1, 1)};

    std::vector<double> mu(2);
    nn::mlp_forward_values(cfg, p, state.data(), 1, mu.data());
    double expect = 0;
    for (int d = 0; d < 2; ++d) {
      const double sigma = std::exp(p.at(kLogStdName).data[d]);
      const double z = (action[d] - mu[d]) / sigma;
      expect += -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2 * 3.14159265358979323846);
    }
    Graph g;
    ParamNodes pn = bind(g, p);
    CHECK(g.scalar(gaussian_logprob(g, cfg, pn, state, action)) ==
          doctest::Approx(expect).epsilon(1e-12));
    CHECK(gaussian_logprob_value(mu.data(), p.at(kLogStdName).data.data(), action.data(), 2) ==
          doctest::Approx(expect).epsilon(1e-12));
  }
}

namespace {

std::vector<Trajectory> random_trajs(int k, int len, Rng& rng) {
  std::vector<Trajectory> trajs(k);
  for (auto& tr : trajs) {
    for (int t = 0; t < len; ++t) {
      tr.states.push_back(rng.uniform(-1, 1));
      tr.states.push_back(rng.uniform(-1, 1));
      tr.actions.push_back(rng.uniform(-0.1, 0.1));
      tr.actions.push_back(rng.uniform(-0.1, 0.1));
      tr.rewards.push_back(rng.uniform(-1, 0));
      tr.log_probs.push_back(rng.uniform(-3, 0));
    }
  }
  return trajs;
}

}  // namespace

TEST_CASE("baseline: zero rewards give zero predictions") {
  Rng rng(11);
  auto trajs = random_trajs(3, 10, rng);
  for (auto& tr : trajs) std::fill(tr.rewards.begin(), tr.rewards.end(), 0.0);
  LinearBaseline b = baseline_fit(trajs, 0.95);
  for (double w : b.weights) CHECK(std::fabs(w) < 1e-12);
  CHECK(std::fabs(b.predict(trajs[0].states.data(), 0)) < 1e-12);
}

TEST_CASE("baseline: exactly-linear returns fit with tiny residual") {
  Rng rng(13);
  // choose target weights, then rewards so returns-to-go hit them exactly
  std::vector<double> wstar{0.3, -0.2, 0.1, 0.05, 1.0, -0.5, 0.2, 0.7};
  Trajectory tr;
  const int len = 25;
  const double gamma = 0.95;
  std::vector<double> desired(len);
  for (int t = 0; t < len; ++t) {
    const double s0 = rng.uniform(-1, 1), s1 = rng.uniform(-1, 1);
    tr.states.push_back(s0);
    tr.states.push_back(s1);
    tr.actions.push_back(0);
    tr.actions.push_back(0);
    tr.log_probs.push_back(0);
    const double ts = 0.01 * t;
    desired[t] = wstar[0] * s0 + wstar[1] * s1 + wstar[2] * s0 * s0 + wstar[3] * s1 * s1 +
                 wstar[4] * ts + wstar[5] * ts * ts + wstar[6] * ts * ts * ts + wstar[7];
  }
  tr.rewards.resize(len);
  for (int t = 0; t < len; ++t)
    tr.rewards[t] = desired[t] - (t + 1 < len ? gamma * desired[t + 1] : 0.0);

  std::vector<Trajectory> trajs{tr};
  LinearBaseline b = baseline_fit(trajs, gamma, 1e-12);
  for (int t = 0; t < len; ++t)
    CHECK(std::fabs(b.predict(tr.states.data() + 2 * t, t) - desired[t]) < 1e-8);
}

TEST_CASE("baseline fit is invariant to trajectory ordering") {
  Rng rng(17);
  auto trajs = random_trajs(4, 12, rng);
  LinearBaseline a = baseline_fit(trajs, 0.95);
  std::vector<Trajectory> rev(trajs.rbegin(), trajs.rend());
  LinearBaseline b = baseline_fit(rev, 0.95);
  for (size_t i = 0; i < a.weights.size(); ++i)
    CHECK(a.weights[i] == doctest::Approx(b.weights[i]).epsilon(1e-9));
}

TEST_CASE("gae: single step, lambda telescoping, lambda zero") {
  Rng rng(19);
  GAEConfig cfg{0.95, 1.0};

  Trajectory one;
  one.states = {0.1, 0.2};
  one.actions = {0, 0};
  one.rewards = {-0.4};
  one.log_probs = {0};
  one.values = {0.25};
  auto a1 = gae_advantages(one, cfg);
  CHECK(a1[0] == doctest::Approx(-0.4 - 0.25).epsilon(1e-15));

  auto trajs = random_trajs(1, 30, rng);
  LinearBaseline b = baseline_fit(trajs, cfg.gamma);
  fill_values({trajs.data(), trajs.size()}, b);
  auto adv = gae_advantages(trajs[0], cfg);
  // lambda = 1: advantage equals discounted return-to-go minus baseline
  const auto& tr = trajs[0];
  double ret = 0;
  for (int64_t t = tr.length() - 1; t >= 0; --t) {
    ret = tr.rewards[t] + cfg.gamma * ret;
    CHECK(adv[t] == doctest::Approx(ret - tr.values[t]).epsilon(1e-10));
  }

  GAEConfig zero{0.95, 0.0};
  auto adv0 = gae_advantages(trajs[0], zero);
  for (int64_t t = 0; t < tr.length(); ++t) {
    const double next_v = t + 1 < tr.length() ? tr.values[t + 1] : 0.0;
    const double delta = tr.rewards[t] + zero.gamma * next_v - tr.values[t];
    CHECK(adv0[t] == doctest::Approx(delta).epsilon(1e-12));
  }
}

TEST_CASE("pg_adapt: zero advantages leave the policy unchanged") {
  auto cfg = tiny_policy_cfg();
  ParamSet theta = init_policy(cfg);
  Rng rng(23);
  auto trajs = random_trajs(2, 8, rng);
  PairBatch pairs = flatten_pairs(trajs);
  std::vector<double> adv(pairs.count, 0.0);
  Graph g;
  ParamNodes tn = bind(g, theta);
  ParamNodes phi = pg_adapt(g, cfg, tn, pairs, adv, 0.1, false);
  ParamSet out = read_values(g, phi, theta);
  for (size_t e = 0; e < theta.size(); ++e)
    for (size_t i = 0; i < theta.entry(e).data.size(); ++i)
      CHECK(out.entry(e).data[i] == theta.entry(e).data[i]);
}

TEST_CASE("pg_adapt: scaling advantages scales the update direction") {
  auto cfg = tiny_policy_cfg();
  ParamSet theta = init_policy(cfg);
  Rng rng(29);
  auto trajs = random_trajs(2, 10, rng);
  PairBatch pairs = flatten_pairs(trajs);
  std::vector<double> adv(pairs.count), adv3(pairs.count);
  for (int64_t i = 0; i < pairs.count; ++i) {
    adv[i] = rng.uniform(-1, 1);
    adv3[i] = 3.0 * adv[i];
  }
  ParamSet p1 = pg_adapt_values(cfg, theta, pairs, adv, 0.1);
  ParamSet p3 = pg_adapt_values(cfg, theta, pairs, adv3, 0.1);
  for (size_t e = 0; e < theta.size(); ++e)
    for (size_t i = 0; i < theta.entry(e).data.size(); ++i) {
      const double d1 = p1.entry(e).data[i] - theta.entry(e).data[i];
      const double d3 = p3.entry(e).data[i] - theta.entry(e).data[i];
      CHECK(d3 == doctest::Approx(3.0 * d1).epsilon(1e-12));
    }
}

TEST_CASE("meta-gradient through pg_adapt matches finite differences") {
  auto cfg = tiny_policy_cfg();
  ParamSet theta = init_policy(cfg);
  Rng rng(31);
  for (auto& v : theta.at("layer0.weight").data) v = rng.uniform(-0.5, 0.5);
  auto strajs = random_trajs(2, 6, rng);
  auto qtrajs = random_trajs(2, 6, rng);
  PairBatch sp = flatten_pairs(strajs), qp = flatten_pairs(qtrajs);
  std::vector<double> sadv(sp.count), qadv(qp.count);
  for (auto& v : sadv) v = rng.uniform(-1, 1);
  for (auto& v : qadv) v = rng.uniform(-1, 1);

  auto build = [&](Graph& g, const ParamNodes& pn) {
    ParamNodes phi = pg_adapt(g, cfg, pn, sp, sadv, 0.1, true);
    return trpo_surrogate(g, cfg, phi, qp, qadv);
  };
  CHECK(check_gradient(build, theta, 1e-5) < 1e-4);
}

TEST_CASE("surrogate: same policy gives -mean(advantage), zero advantages give zero") {
  auto cfg = tiny_policy_cfg();
  ParamSet theta = init_policy(cfg);
  Rng rng(37);
  for (auto& v : theta.at("layer0.weight").data) v = rng.uniform(-0.5, 0.5);

  // record behavior log-probs under the same policy
  auto trajs = random_trajs(2, 10, rng);
  for (auto& tr : trajs) {
    const int64_t len = tr.length();
    std::vector<double> mu(len * 2);
    nn::mlp_forward_values(cfg, theta, tr.states.data(), len, mu.data());
    for (int64_t t = 0; t < len; ++t)
      tr.log_probs[t] = gaussian_logprob_value(mu.data() + 2 * t,
                                               theta.at(kLogStdName).data.data(),
                                               tr.actions.data() + 2 * t, 2);
  }
  PairBatch pairs = flatten_pairs(trajs);
  std::vector<double> adv(pairs.count);
  double mean_adv = 0;
  for (auto& v : adv) {
    v = rng.uniform(-1, 1);
    mean_adv += v;
  }
  mean_adv /= pairs.count;

  Graph g;
  ParamNodes pn = bind(g, theta);
  NodeId surr = trpo_surrogate(g, cfg, pn, pairs, adv);
  CHECK(g.scalar(surr) == doctest::Approx(-mean_adv).epsilon(1e-12));

  std::vector<double> zero(pairs.count, 0.0);
  CHECK(g.scalar(trpo_surrogate(g, cfg, pn, pairs, zero)) == 0.0);
}

TEST_CASE("surrogate matches a per-sample oracle") {
  auto cfg = tiny_policy_cfg();
  ParamSet theta = init_policy(cfg);
  Rng rng(41);
  for (auto& v : theta.at("layer0.weight").data) v = rng.uniform(-0.5, 0.5);
  auto trajs = random_trajs(2, 7, rng);
  PairBatch pairs = flatten_pairs(trajs);
  std::vector<double> adv(pairs.count);
  for (auto& v : adv) v = rng.uniform(-1, 1);

  std::vector<double> mu(pairs.count * 2);
  nn::mlp_forward_values(cfg, theta, pairs.states.data(), pairs.count, mu.data());
  double expect = 0;
  for (int64_t i = 0; i < pairs.count; ++i) {
    const double lp = gaussian_logprob_value(mu.data() + 2 * i,
                                             theta.at(kLogStdName).data.data(),
                                             pairs.actions.data() + 2 * i, 2);
    expect += std::exp(lp - pairs.log_probs[i]) * adv[i];
  }
  expect = -expect / pairs.count;

  Graph g;
  ParamNodes pn = bind(g, theta);
  CHECK(g.scalar(trpo_surrogate(g, cfg, pn, pairs, adv)) ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("average policy KL: identical, mean shift closed form, MC estimate") {
  auto cfg = tiny_policy_cfg();
  ParamSet p = init_policy(cfg);
  Rng rng(43);
  for (auto& v : p.at("layer0.weight").data) v = rng.uniform(-0.5, 0.5);
  std::vector<double> states;
  for (int i = 0; i < 20; ++i) states.push_back(rng.uniform(-1, 1));

  CHECK(avg_policy_kl_value(cfg, p, p, states, 10) == doctest::Approx(0.0).epsilon(1e-15));

  // equal sigmas, biases shifted by d: KL = sum_d d^2 / (2 sigma^2)
  ParamSet q = p;
  const double shift0 = 0.2, shift1 = -0.3, ls = -0.4;
  p.at(kLogStdName).data = {ls, ls};
  q.at(kLogStdName).data = {ls, ls};
  q.at("layer0.bias").data[0] += shift0;
  q.at("layer0.bias").data[1] += shift1;
  const double sigma2 = std::exp(2 * ls);
  const double expect = (shift0 * shift0 + shift1 * shift1) / (2 * sigma2);
  CHECK(avg_policy_kl_value(cfg, p, q, states, 10) == doctest::Approx(expect).epsilon(1e-12));

  // Monte-Carlo estimate within 1% at 1e5 samples
  std::vector<double> mu_p(2), mu_q(2);
  const double s0[2] = {states[0], states[1]};
  nn::mlp_forward_values(cfg, p, s0, 1, mu_p.data());
  nn::mlp_forward_values(cfg, q, s0, 1, mu_q.data());
  double mc = 0;
  Rng mc_rng(51);
  const int n_mc = 100000;
  for (int i = 0; i < n_mc; ++i) {
    double a[2];
    for (int d = 0; d < 2; ++d) a[d] = mu_p[d] + std::exp(ls) * mc_rng.normal();
    mc += gaussian_logprob_value(mu_p.data(), p.at(kLogStdName).data.data(), a, 2) -
          gaussian_logprob_value(mu_q.data(), q.at(kLogStdName).data.data(), a, 2);
  }
  mc /= n_mc;
  const double exact = avg_policy_kl_value(cfg, p, q, std::vector<double>{s0[0], s0[1]}, 1);
  CHECK(mc == doctest::Approx(exact).epsilon(0.01));
}

TEST_CASE("kd_rl: zero at the target, equals avg KL, stop-gradient holds") {
  auto cfg = tiny_policy_cfg();
  ParamSet phi = init_policy(cfg);
  Rng rng(53);
  for (auto& v : phi.at("layer0.weight").data) v = rng.uniform(-0.5, 0.5);
  ParamSet target = phi;
  std::vector<double> states;
  for (int i = 0; i < 12; ++i) states.push_back(rng.uniform(-1, 1));

  {
    Graph g;
    ParamNodes pn = bind(g, phi);
    CHECK(g.scalar(kd_rl_loss(g, cfg, pn, target, states, 6)) ==
          doctest::Approx(0.0).epsilon(1e-15));
  }

  for (auto& v : target.at("layer0.bias").data) v += 0.25;
  Graph g;
  ParamNodes pn = bind(g, phi);
  // momentum parameters bound as leaves must receive exactly zero gradient
  ParamNodes mn = bind(g, target, false);
  NodeId kd = kd_rl_loss(g, cfg, pn, target, states, 6);
  CHECK(g.scalar(kd) == doctest::Approx(avg_policy_kl_value(cfg, phi, target, states, 6))
                            .epsilon(1e-12));
  auto mg = grad(g, kd, mn.nodes, false);
  for (NodeId n : mg)
    for (double v : g.value(n)) CHECK(v == 0.0);
  // while the student side gets a real gradient
  auto sg = grad(g, kd, pn.nodes, false);
  double total = 0;
  for (NodeId n : sg)
    for (double v : g.value(n)) total += std::fabs(v);
  CHECK(total > 1e-6);
}

namespace {

ParamSet vec_params(const std::vector<double>& v) {
  ParamSet p;
  p.add("w", Shape{static_cast<int64_t>(v.size())}, v);
  return p;
}

}  // namespace

TEST_CASE("trpo toy: natural-gradient step matches the closed form") {
  Rng rng(61);
  std::vector<double> t0(5), c(5);
  for (auto& v : t0) v = rng.uniform(-1, 1);
  for (auto& v : c) v = rng.uniform(4, 6);  // minimum far away: full step accepted
  ParamSet theta = vec_params(t0);

  TrpoProblem prob;
  prob.loss_value = [&](const ParamSet& th) {
    double s = 0;
    for (size_t i = 0; i < 5; ++i) {
      const double d = th.at("w").data[i] - c[i];
      s += 0.5 * d * d;
    }
    return s;
  };
  prob.loss_grad = [&](const ParamSet& th) {
    std::vector<double> g(5);
    for (size_t i = 0; i < 5; ++i) g[i] = th.at("w").data[i] - c[i];
    return vec_params(g);
  };
  prob.fisher_vp = [](const ParamSet& v) { return v; };  // identity Fisher
  prob.kl_to_old = [&](const ParamSet& th) {
    double s = 0;
    for (size_t i = 0; i < 5; ++i) {
      const double d = th.at("w").data[i] - t0[i];
      s += 0.5 * d * d;
    }
    return s / 1.21;  // curvature safely inside the trust region
  };

  TrpoConfig cfg;
  cfg.delta = 0.01;
  cfg.cg_damping = 0.0;
  TrpoReport rep;
  ParamSet out = trpo_meta_update(theta, prob, cfg, &rep);
  CHECK(rep.accepted);
  CHECK(rep.kl <= cfg.delta);
  CHECK(rep.loss_after < rep.loss_before);

  double gg = 0;
  for (size_t i = 0; i < 5; ++i) {
    const double gi = t0[i] - c[i];
    gg += gi * gi;
  }
  const double scale = std::sqrt(2 * cfg.delta / gg);
  for (size_t i = 0; i < 5; ++i) {
    const double expect = t0[i] - scale * (t0[i] - c[i]);
    CHECK(out.at("w").data[i] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("trpo: zero gradient and failed line search leave theta unchanged") {
  ParamSet theta = vec_params({1.0, -2.0, 3.0});
  TrpoProblem prob;
  prob.loss_value = [](const ParamSet&) { return 1.0; };
  prob.loss_grad = [](const ParamSet& th) {
    return vec_params(std::vector<double>(th.at("w").data.size(), 0.0));
  };
  prob.fisher_vp = [](const ParamSet& v) { return v; };
  prob.kl_to_old = [](const ParamSet&) { return 0.0; };
  TrpoReport rep;
  ParamSet out = trpo_meta_update(theta, prob, TrpoConfig{}, &rep);
  CHECK(!rep.accepted);
  CHECK(std::memcmp(out.at("w").data.data(), theta.at("w").data.data(), 3 * sizeof(double)) == 0);

  // constant loss cannot improve: every backtrack fails
  prob.loss_grad = [](const ParamSet& th) {
    return vec_params(std::vector<double>(th.at("w").data.size(), 1.0));
  };
  ParamSet out2 = trpo_meta_update(theta, prob, TrpoConfig{}, &rep);
  CHECK(!rep.accepted);
  CHECK(std::memcmp(out2.at("w").data.data(), theta.at("w").data.data(), 3 * sizeof(double)) ==
        0);
}

TEST_CASE("rollouts are deterministic and respect the horizon") {
  auto cfg = tiny_policy_cfg();
  ParamSet p = init_policy(cfg);
  Rng r1(71), r2(71);
  auto t1 = collect_rollouts(cfg, p, {0.3, 0.2}, 20, 4, r1);
  auto t2 = collect_rollouts(cfg, p, {0.3, 0.2}, 20, 4, r2);
  REQUIRE(t1.size() == 4);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(t1[i].length() <= 20);
    CHECK(t1[i].states == t2[i].states);
    CHECK(t1[i].rewards == t2[i].rewards);
    CHECK(t1[i].log_probs == t2[i].log_probs);
  }
}

namespace {

RlConfig small_rl(bool with_simt) {
  RlConfig cfg;
  cfg.policy = {2, {8}, 2, nn::Activation::kRelu, 11};
  cfg.iterations = 2;
  cfg.task_batch = 3;
  cfg.rollouts = 4;
  cfg.horizon = 12;
  cfg.seed = 5;
  if (with_simt) {
    engine::SimtConfig s;
    s.lambda = 0.1;
    s.eta = 0.99;
    cfg.simt = s;
  }
  return cfg;
}

}  // namespace

TEST_CASE("rl training: lambda=0 reduces to the plain baseline trainer") {
  RlConfig base = small_rl(false);
  RlConfig reduced = small_rl(true);
  reduced.simt->lambda = 0.0;
  RlState sa = make_rl_state(base);
  RlState sb = make_rl_state(reduced);
  for (int i = 0; i < 2; ++i) {
    auto ia = rl_train_iteration(sa, base);
    auto ib = rl_train_iteration(sb, reduced);
    CHECK(ia.total == ib.total);
  }
  for (size_t e = 0; e < sa.theta.size(); ++e)
    CHECK(std::memcmp(sa.theta.entry(e).data.data(), sb.theta.entry(e).data.data(),
                      sa.theta.entry(e).data.size() * sizeof(double)) == 0);
}

TEST_CASE("rl training: accepted steps respect the KL budget") {
  RlConfig cfg = small_rl(true);
  cfg.iterations = 3;
  RlState st = make_rl_state(cfg);
  for (int i = 0; i < 3; ++i) {
    auto stats = rl_train_iteration(st, cfg);
    CHECK(std::isfinite(stats.total));
    if (stats.trpo.accepted) {
      CHECK(stats.trpo.kl <= cfg.trpo.delta);
      CHECK(stats.trpo.loss_after < stats.trpo.loss_before);
    }
  }
  RlEvalCurve curve = rl_evaluate(cfg, st.theta, 3, 2, 99);
  CHECK(curve.mean_return.size() == 3);
  for (double r : curve.mean_return) CHECK(r <= 0.0);
}
