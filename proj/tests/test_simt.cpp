#include <cmath>
#include <cstring>

#include "doctest.h"
#include "simt/engine.hpp"

using namespace simt;
using namespace simt::ad;
using namespace simt::engine;

TEST_CASE("ema update examples") {
  ParamSet theta;
  theta.add("w", Shape{}, std::vector<double>{0.0});
  MomentumState m = make_momentum(theta, 0.9);
  m.theta_moment.at("w").data[0] = 1.0;
  ema_update(m, theta);
  CHECK(m.theta_moment.at("w").data[0] == doctest::Approx(0.9).epsilon(1e-16));

  MomentumState zero_eta = make_momentum(theta, 0.0);
  zero_eta.theta_moment.at("w").data[0] = 123.0;
  ParamSet t2;
  t2.add("w", Shape{}, std::vector<double>{-7.0});
  ema_update(zero_eta, t2);
  CHECK(zero_eta.theta_moment.at("w").data[0] == -7.0);
}

TEST_CASE("repeated ema updates contract geometrically") {
  ParamSet theta;
  theta.add("w", Shape{2}, std::vector<double>{1.0, -2.0});
  MomentumState m = make_momentum(theta, 0.8);
  m.theta_moment.at("w").data = {3.0, 4.0};
  double prev = 0;
  for (int i = 0; i < 20; ++i) {
    double gap = 0;
    for (size_t j = 0; j < 2; ++j)
      gap = std::max(gap,
                     std::fabs(m.theta_moment.at("w").data[j] - theta.at("w").data[j]));
    if (i > 0) CHECK(gap == doctest::Approx(prev * 0.8).epsilon(1e-12));
    prev = gap;
    ema_update(m, theta);
  }
}

TEST_CASE("incompatible parameter sets are rejected") {
  ParamSet theta;
  theta.add("w", Shape{2}, std::vector<double>{1, 2});
  MomentumState m = make_momentum(theta, 0.9);
  ParamSet other;
  other.add("w", Shape{3}, std::vector<double>{1, 2, 3});
  CHECK_THROWS_AS(ema_update(m, other), Error);
}

TEST_CASE("kd regression examples") {
  Graph g;
  NodeId a = g.constant(Shape{3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(g.scalar(kd_loss_regression(g, a, a)) == 0.0);

  NodeId student = g.leaf(Shape{1, 2}, std::vector<double>{0, 0});
  NodeId target = g.constant(Shape{1, 2}, std::vector<double>{1, 1});
  CHECK(g.scalar(kd_loss_regression(g, student, target)) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("kd regression matches a two-loop oracle on random 5x3 outputs") {
  Rng rng(5);
  std::vector<double> sv(15), tv(15);
  for (auto& v : sv) v = rng.uniform(-2, 2);
  for (auto& v : tv) v = rng.uniform(-2, 2);
  double expect = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) {
      const double d = sv[i * 3 + j] - tv[i * 3 + j];
      expect += d * d;
    }
  expect /= 5;
  Graph g;
  NodeId s = g.constant(Shape{5, 3}, sv);
  NodeId t = g.constant(Shape{5, 3}, tv);
  CHECK(g.scalar(kd_loss_regression(g, s, t)) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("kd regression gradient flows only into the student") {
  Graph g;
  NodeId s = g.leaf(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
  NodeId t = g.leaf(Shape{2, 2}, std::vector<double>{0, 1, 0, 1});
  NodeId loss = kd_loss_regression(g, s, t);
  auto gs = grad(g, loss, std::vector<NodeId>{s, t}, false);
  bool student_nonzero = false;
  for (double v : g.value(gs[0])) student_nonzero |= v != 0.0;
  CHECK(student_nonzero);
  for (double v : g.value(gs[1])) CHECK(v == 0.0);
}

namespace {

// Independent scalar reimplementation of the tempered KL distillation loss.
double kd_cls_oracle(const std::vector<double>& target, const std::vector<double>& student,
                     int64_t rows, int64_t cols, double T) {
  double total = 0;
  for (int64_t r = 0; r < rows; ++r) {
    std::vector<double> p(cols), q(cols);
    double zp = 0, zq = 0;
    for (int64_t c = 0; c < cols; ++c) {
      p[c] = std::exp(target[r * cols + c] / T);
      q[c] = std::exp(student[r * cols + c] / T);
      zp += p[c];
      zq += q[c];
    }
    double kl = 0;
    for (int64_t c = 0; c < cols; ++c) kl += (p[c] / zp) * std::log((p[c] / zp) / (q[c] / zq));
    total += T * T * kl;
  }
  return total / rows;
}

}  // namespace

TEST_CASE("kd classification: identical logits give zero for any T") {
  Graph g;
  NodeId z = g.constant(Shape{2, 3}, std::vector<double>{1, 2, 3, -1, 0, 1});
  for (double T : {1.0, 2.0, 4.0})
    CHECK(g.scalar(kd_loss_classification(g, z, z, T)) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("kd classification is zero iff the softened distributions match") {
  Graph g;
  // shifting logits by a constant leaves softmax unchanged
  NodeId z1 = g.constant(Shape{1, 3}, std::vector<double>{1, 2, 3});
  NodeId z2 = g.constant(Shape{1, 3}, std::vector<double>{11, 12, 13});
  CHECK(g.scalar(kd_loss_classification(g, z2, z1, 4.0)) ==
        doctest::Approx(0.0).epsilon(1e-13));
  NodeId z3 = g.constant(Shape{1, 3}, std::vector<double>{3, 2, 1});
  CHECK(g.scalar(kd_loss_classification(g, z3, z1, 4.0)) > 1e-4);
}

TEST_CASE("kd classification matches the oracle on 100 random pairs") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t rows = 1 + rng.below(4), cols = 2 + rng.below(4);
    std::vector<double> t(rows * cols), s(rows * cols);
    for (auto& v : t) v = rng.uniform(-3, 3);
    for (auto& v : s) v = rng.uniform(-3, 3);
    const double T = trial % 2 == 0 ? 1.0 : 4.0;
    Graph g;
    NodeId tn = g.constant(Shape{rows, cols}, t);
    NodeId sn = g.constant(Shape{rows, cols}, s);
    const double got = g.scalar(kd_loss_classification(g, sn, tn, T));
    CHECK(got == doctest::Approx(kd_cls_oracle(t, s, rows, cols, T)).epsilon(1e-12));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("kd classification: z1=[1,0], z2=[0,1], T=4 matches the oracle") {
  Graph g;
  NodeId z1 = g.constant(Shape{1, 2}, std::vector<double>{1, 0});
  NodeId z2 = g.constant(Shape{1, 2}, std::vector<double>{0, 1});
  const double expect = kd_cls_oracle({1, 0}, {0, 1}, 1, 2, 4.0);
  CHECK(g.scalar(kd_loss_classification(g, z2, z1, 4.0)) ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("kd classification rejects non-positive temperature") {
  Graph g;
  NodeId z = g.constant(Shape{1, 2}, std::vector<double>{1, 0});
  CHECK_THROWS_AS(kd_loss_classification(g, z, z, 0.0), Error);
  CHECK_THROWS_AS(kd_loss_classification(g, z, z, -1.0), Error);
}

TEST_CASE("hybrid loss arithmetic") {
  Graph g;
  NodeId a = g.constant_scalar(2.0);
  NodeId b = g.constant_scalar(4.0);
  CHECK(g.scalar(hybrid_loss(g, a, b, 0.5)) == 3.0);
  CHECK(g.scalar(hybrid_loss(g, a, b, 0.0)) == 2.0);
  CHECK_THROWS_AS(hybrid_loss(g, a, b, 1.0), Error);
}

TEST_CASE("hybrid loss gradient is linear in lambda") {
  Rng rng(3);
  ParamSet theta;
  std::vector<double> w(4);
  for (auto& v : w) v = rng.uniform(-1, 1);
  theta.add("w", Shape{4}, w);

  auto grads_at = [&](double lam) {
    Graph g;
    ParamNodes pn = bind(g, theta);
    NodeId t1 = sum(g, square(g, pn.at("w")));
    NodeId t2 = sum(g, sin_op(g, pn.at("w")));
    NodeId h = hybrid_loss(g, t1, t2, lam);
    auto gs = grad(g, h, pn.nodes, false);
    auto v = g.value(gs[0]);
    return std::vector<double>(v.begin(), v.end());
  };
  auto g0 = grads_at(0.0);   // pure term1
  auto g1 = grads_at(0.999);
  // term2 gradient inferred from the two endpoints
  for (double lam : {0.2, 0.5, 0.8}) {
    auto gl = grads_at(lam);
    for (size_t i = 0; i < gl.size(); ++i) {
      const double t2g = (g1[i] - (1 - 0.999) * g0[i]) / 0.999;
      CHECK(gl[i] == doctest::Approx((1 - lam) * g0[i] + lam * t2g).epsilon(1e-10));
    }
  }
}

namespace {

TrainerConfig sinusoid_trainer(bool with_simt, double lambda, double p) {
  TrainerConfig cfg;
  cfg.model = {1, {8, 8}, 1, nn::Activation::kRelu, 7};
  cfg.adapt.kind = meta::AdaptKind::kMaml;
  cfg.adapt.steps = 2;
  cfg.adapt.alpha = 0.01;
  cfg.adam.lr = 1e-3;
  cfg.seed = 99;
  if (with_simt) {
    SimtConfig s;
    s.lambda = lambda;
    s.eta = 0.995;
    s.dropout.p = p;
    s.dropout.seed = 5;
    cfg.simt = s;
  }
  return cfg;
}

std::vector<tasks::Episode> sample_batch(int n, uint64_t seed) {
  tasks::SinusoidFamily fam;
  Rng rng(seed);
  std::vector<tasks::Episode> out;
  for (int i = 0; i < n; ++i) out.push_back(tasks::sample_episode(fam, 0, 5, 10, rng));
  return out;
}

}  // namespace

TEST_CASE("simt with lambda=0 p=0 reproduces the baseline trainer bit for bit") {
  TrainerConfig base = sinusoid_trainer(false, 0, 0);
  TrainerConfig reduced = sinusoid_trainer(true, 0.0, 0.0);
  TrainState sa = make_train_state(base);
  TrainState sb = make_train_state(reduced);
  for (int step = 0; step < 5; ++step) {
    auto batch = sample_batch(3, 1000 + step);
    auto ma = simt_train_step(sa, batch, base);
    auto mb = simt_train_step(sb, batch, reduced);
    CHECK(ma.total_loss == mb.total_loss);
  }
  for (size_t e = 0; e < sa.theta.size(); ++e)
    CHECK(std::memcmp(sa.theta.entry(e).data.data(), sb.theta.entry(e).data.data(),
                      sa.theta.entry(e).data.size() * sizeof(double)) == 0);
}

TEST_CASE("momentum target equals student adaptation right after initialization") {
  TrainerConfig cfg = sinusoid_trainer(true, 0.5, 0.0);
  TrainState st = make_train_state(cfg);
  auto batch = sample_batch(1, 42);
  const auto& ep = batch[0];

  Graph g;
  ParamNodes th = bind(g, st.theta);
  meta::LossFn support_loss = [&](Graph& gg, const ParamNodes& p) {
    NodeId x = gg.constant(Shape{ep.n_support, 1}, ep.xs);
    return tasks::mse_loss(gg, nn::mlp_forward(gg, cfg.model, p, x), ep.ys);
  };
  meta::Solver phi = meta::adapt_gradient(g, th, support_loss, cfg.adapt);
  auto target = momentum_target(g, st.momentum.theta_moment, cfg.adapt, support_loss);
  for (size_t e = 0; e < phi.params.size(); ++e) {
    auto a = g.value(phi.params.nodes[e]);
    auto b = g.value(target.solver.params.nodes[e]);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("stop-gradient: momentum parameters receive exactly zero gradient") {
  TrainerConfig cfg = sinusoid_trainer(true, 0.5, 0.2);
  TrainState st = make_train_state(cfg);
  StepDebug dbg;
  for (int step = 0; step < 3; ++step) {
    auto batch = sample_batch(2, 500 + step);
    simt_train_step(st, batch, cfg, &dbg);
  }
  REQUIRE(dbg.momentum_grad_abs_max.size() == 6);
  for (double v : dbg.momentum_grad_abs_max) CHECK(v == 0.0);
}

TEST_CASE("ema ordering: update uses the freshly stepped theta") {
  TrainerConfig cfg = sinusoid_trainer(true, 0.3, 0.0);
  TrainState st = make_train_state(cfg);
  auto batch = sample_batch(2, 7);
  simt_train_step(st, batch, cfg);  // warm up so moment != theta

  ParamSet moment_before = st.momentum.theta_moment;
  auto batch2 = sample_batch(2, 8);
  simt_train_step(st, batch2, cfg);
  const double eta = cfg.simt->eta;
  for (size_t e = 0; e < st.theta.size(); ++e)
    for (size_t i = 0; i < st.theta.entry(e).data.size(); ++i) {
      const double expect =
          eta * moment_before.entry(e).data[i] + (1.0 - eta) * st.theta.entry(e).data[i];
      CHECK(st.momentum.theta_moment.entry(e).data[i] == expect);
    }
}

TEST_CASE("step metrics reproduce the lambda-weighted total") {
  TrainerConfig cfg = sinusoid_trainer(true, 0.4, 0.1);
  TrainState st = make_train_state(cfg);
  for (int step = 0; step < 3; ++step) {
    auto batch = sample_batch(3, 90 + step);
    StepMetrics m = simt_train_step(st, batch, cfg);
    const double recombined = (1 - m.lambda_eff) * m.task_loss + m.lambda_eff * m.kd_loss;
    CHECK(m.total_loss == doctest::Approx(recombined).epsilon(1e-12));
  }
}

TEST_CASE("lambda ramps up linearly when configured") {
  SimtConfig s;
  s.lambda = 0.5;
  s.lambda_rampup_steps = 100;
  CHECK(lambda_effective(s, 0) == 0.0);
  CHECK(lambda_effective(s, 50) == doctest::Approx(0.25));
  CHECK(lambda_effective(s, 100) == 0.5);
  CHECK(lambda_effective(s, 500) == 0.5);
  s.lambda_rampup_steps = 0;
  CHECK(lambda_effective(s, 0) == 0.5);
}

TEST_CASE("adam on a quadratic descends") {
  ParamSet p;
  p.add("w", Shape{2}, std::vector<double>{5.0, -3.0});
  AdamState st = make_adam_state(p);
  AdamConfig cfg;
  cfg.lr = 0.1;
  for (int i = 0; i < 200; ++i) {
    ParamSet grad;
    grad.add("w", Shape{2},
             std::vector<double>{2 * p.at("w").data[0], 2 * p.at("w").data[1]});
    adam_step(p, st, cfg, grad);
  }
  CHECK(std::fabs(p.at("w").data[0]) < 0.05);
  CHECK(std::fabs(p.at("w").data[1]) < 0.05);
}
