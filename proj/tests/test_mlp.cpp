#include <cmath>
#include <cstring>

#include "doctest.h"
#include "simt/grad.hpp"
#include "simt/mlp.hpp"
#include "simt/tasks.hpp"

using namespace simt;
using namespace simt::ad;
using namespace simt::nn;

TEST_CASE("init_params layer counting and determinism") {
  MlpConfig cfg{2, {100, 100}, 4, Activation::kRelu, 42};
  ParamSet p = init_params(cfg);
  CHECK(p.size() == 6);  // 3 weight matrices + 3 bias vectors
  CHECK(p.at("layer0.weight").shape == Shape{2, 100});
  CHECK(p.at("layer2.weight").shape == Shape{100, 4});

  ParamSet q = init_params(cfg);
  for (size_t e = 0; e < p.size(); ++e)
    CHECK(std::memcmp(p.entry(e).data.data(), q.entry(e).data.data(),
                      p.entry(e).data.size() * sizeof(double)) == 0);

  for (int l = 0; l < 3; ++l)
    for (double b : p.at(cfg.bias_name(l)).data) CHECK(b == 0.0);

  const double bound = std::sqrt(6.0 / (2 + 100));
  for (double w : p.at("layer0.weight").data) CHECK(std::fabs(w) <= bound);
}

TEST_CASE("zero parameters give zero output") {
  MlpConfig cfg{3, {5}, 2, Activation::kRelu, 0};
  ParamSet p = init_params(cfg);
  for (size_t e = 0; e < p.size(); ++e)
    std::fill(p.entry(e).data.begin(), p.entry(e).data.end(), 0.0);
  Graph g;
  ParamNodes pn = bind(g, p);
  NodeId x = g.constant(Shape{4, 3}, std::vector<double>(12, 1.5));
  auto out = g.value(mlp_forward(g, cfg, pn, x));
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("identity one-layer net reproduces its input") {
  MlpConfig cfg{3, {}, 3, Activation::kRelu, 0};
  ParamSet p = init_params(cfg);
  auto& w = p.at("layer0.weight").data;
  std::fill(w.begin(), w.end(), 0.0);
  for (int i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  Graph g;
  ParamNodes pn = bind(g, p);
  std::vector<double> xv{-1.0, 0.5, 2.0, 3.0, -0.25, 0.0};
  NodeId x = g.constant(Shape{2, 3}, xv);
  auto out = g.value(mlp_forward(g, cfg, pn, x));
  for (size_t i = 0; i < xv.size(); ++i) CHECK(out[i] == xv[i]);
}

TEST_CASE("random 2-16-1 net gradient check vs finite differences") {
  MlpConfig cfg{2, {16}, 1, Activation::kTanh, 5};
  ParamSet at = init_params(cfg);
  Rng rng(9);
  std::vector<double> xv(10), yv(5);
  for (auto& v : xv) v = rng.uniform(-1, 1);
  for (auto& v : yv) v = rng.uniform(-1, 1);
  auto build = [&](Graph& g, const ParamNodes& pn) {
    NodeId x = g.constant(Shape{5, 2}, xv);
    return tasks::mse_loss(g, mlp_forward(g, cfg, pn, x), yv);
  };
  CHECK(check_gradient(build, at, 1e-5) < 1e-4);
}

TEST_CASE("every parameter entry receives a gradient node") {
  MlpConfig cfg{2, {4, 4}, 2, Activation::kRelu, 1};
  ParamSet p = init_params(cfg);
  Graph g;
  ParamNodes pn = bind(g, p);
  NodeId x = g.constant(Shape{3, 2}, std::vector<double>(6, 0.3));
  NodeId loss = mean(g, square(g, mlp_forward(g, cfg, pn, x)));
  auto gs = grad(g, loss, pn.nodes, false);
  REQUIRE(gs.size() == p.size());
  for (size_t e = 0; e < gs.size(); ++e) CHECK(g.shape(gs[e]) == p.entry(e).shape);
}

TEST_CASE("dropout p=0 is the identity and consumes no randomness") {
  Graph g;
  Rng rng(3);
  const auto before = rng.state();
  NodeId x = g.constant(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  NodeId y = dropout_apply(g, x, 0.0, rng);
  CHECK(y == x);
  CHECK(rng.state() == before);
}

TEST_CASE("dropout p=0.5 with an all-keep draw doubles the input") {
  // Find a seed whose first six draws all keep (uniform >= p).
  uint64_t seed = 0;
  for (;; ++seed) {
    Rng probe(seed);
    bool all = true;
    for (int i = 0; i < 6; ++i)
      if (probe.uniform() < 0.5) {
        all = false;
        break;
      }
    if (all) break;
  }
  Graph g;
  Rng rng(seed);
  NodeId x = g.constant(Shape{6}, std::vector<double>{1, -2, 3, 0.5, -0.25, 4});
  auto out = g.value(dropout_apply(g, x, 0.5, rng));
  auto in = g.value(x);
  for (size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 2.0 * in[i]);
}

TEST_CASE("dropout preserves expectation over 10000 masks within 2%") {
  Graph g;
  Rng rng(77);
  const double unit = 1.7;
  NodeId x = g.constant(Shape{1}, std::vector<double>{unit});
  double acc = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) acc += g.value(dropout_apply(g, x, 0.3, rng))[0];
  CHECK(acc / trials == doctest::Approx(unit).epsilon(0.02));
}

TEST_CASE("forward with dropout is a pure function of params, input, seed") {
  MlpConfig cfg{2, {8}, 2, Activation::kRelu, 4};
  ParamSet p = init_params(cfg);
  DropoutSpec spec{0.4, {}, 123};
  auto run = [&]() {
    Graph g;
    ParamNodes pn = bind(g, p);
    NodeId x = g.constant(Shape{3, 2}, std::vector<double>{0.1, 0.2, -0.3, 0.4, 0.5, -0.6});
    Rng mask_rng(spec.seed);
    auto v = g.value(mlp_forward(g, cfg, pn, x, spec, mask_rng));
    return std::vector<double>(v.begin(), v.end());
  };
  auto a = run(), b = run();
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("value forward matches graph forward") {
  MlpConfig cfg{3, {7, 5}, 2, Activation::kTanh, 12};
  ParamSet p = init_params(cfg);
  Rng rng(6);
  std::vector<double> xv(4 * 3);
  for (auto& v : xv) v = rng.uniform(-2, 2);
  Graph g;
  ParamNodes pn = bind(g, p);
  auto ref = g.value(mlp_forward(g, cfg, pn, g.constant(Shape{4, 3}, xv)));
  std::vector<double> out(4 * 2);
  mlp_forward_values(cfg, p, xv.data(), 4, out.data());
  for (size_t i = 0; i < out.size(); ++i) CHECK(out[i] == ref[i]);
}
