#include <cmath>

#include "doctest.h"
#include "simt/adapt.hpp"
#include "simt/mlp.hpp"
#include "simt/tasks.hpp"

using namespace simt;
using namespace simt::ad;
using namespace simt::meta;

TEST_CASE("one SGD step on a scalar quadratic: theta 1, alpha 0.1 -> 0.8") {
  Graph g;
  ParamSet theta;
  theta.add("w", Shape{}, std::vector<double>{1.0});
  ParamNodes tn = bind(g, theta);
  AdaptConfig cfg;
  cfg.kind = AdaptKind::kMaml;
  cfg.steps = 1;
  cfg.alpha = 0.1;
  LossFn loss = [](Graph& gg, const ParamNodes& p) { return square(gg, p.at("w")); };
  Solver phi = adapt_gradient(g, tn, loss, cfg);
  CHECK(g.scalar(phi.params.at("w")) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("metasgd with zero step sizes leaves theta untouched") {
  Graph g;
  ParamSet theta;
  theta.add("w", Shape{3}, std::vector<double>{1.0, -2.0, 0.5});
  ParamSet alpha;
  alpha.add("w", Shape{3}, std::vector<double>{0.0, 0.0, 0.0});
  ParamNodes tn = bind(g, theta);
  ParamNodes an = bind(g, alpha);
  AdaptConfig cfg;
  cfg.kind = AdaptKind::kMetaSgd;
  LossFn loss = [](Graph& gg, const ParamNodes& p) { return sum(gg, square(gg, p.at("w"))); };
  Solver phi = adapt_gradient(g, tn, loss, cfg, &an);
  auto v = g.value(phi.params.at("w"));
  CHECK(v[0] == 1.0);
  CHECK(v[1] == -2.0);
  CHECK(v[2] == 0.5);
}

TEST_CASE("maml meta-gradient on a 1-D quadratic matches finite differences") {
  // inner: L_S(t) = (t-a)^2, one step alpha; outer: (phi-b)^2
  const double a = 0.4, b = -0.9, alpha = 0.07, t0 = 1.3;
  auto build_meta = [&](Graph& g, const ParamNodes& pn) {
    AdaptConfig cfg;
    cfg.kind = AdaptKind::kMaml;
    cfg.steps = 1;
    cfg.alpha = alpha;
    cfg.second_order = true;
    LossFn inner = [&](Graph& gg, const ParamNodes& p) {
      return square(gg, sub(gg, p.at("t"), gg.constant_scalar(a)));
    };
    Solver phi = adapt_gradient(g, pn, inner, cfg);
    return square(g, sub(g, phi.params.at("t"), g.constant_scalar(b)));
  };
  ParamSet at;
  at.add("t", Shape{}, std::vector<double>{t0});
  CHECK(check_gradient(build_meta, at, 1e-5) < 1e-6);

  // closed form: dJ/dt = 2(phi-b)(1-2alpha)
  Graph g;
  ParamNodes pn = bind(g, at);
  NodeId j = build_meta(g, pn);
  auto gs = grad(g, j, pn.nodes, false);
  const double phi = t0 - alpha * 2 * (t0 - a);
  CHECK(g.scalar(gs[0]) == doctest::Approx(2 * (phi - b) * (1 - 2 * alpha)).epsilon(1e-12));
}

namespace {

nn::MlpConfig small_net() { return {2, {4}, 1, nn::Activation::kTanh, 3}; }

LossFn support_mse(const nn::MlpConfig& cfg, const std::vector<double>& xv,
                   const std::vector<double>& yv, int64_t n) {
  return [&cfg, xv, yv, n](Graph& g, const ParamNodes& p) {
    NodeId x = g.constant(Shape{n, 2}, xv);
    return tasks::mse_loss(g, nn::mlp_forward(g, cfg, p, x), yv);
  };
}

}  // namespace

TEST_CASE("fomaml and maml produce identical adapted values") {
  auto cfgnet = small_net();
  ParamSet theta = nn::init_params(cfgnet);
  Rng rng(4);
  std::vector<double> xv(8), yv(4);
  for (auto& v : xv) v = rng.uniform(-1, 1);
  for (auto& v : yv) v = rng.uniform(-1, 1);

  auto adapt_with = [&](AdaptKind kind) {
    Graph g;
    ParamNodes tn = bind(g, theta);
    AdaptConfig cfg;
    cfg.kind = kind;
    cfg.steps = 3;
    cfg.alpha = 0.05;
    Solver phi = adapt_gradient(g, tn, support_mse(cfgnet, xv, yv, 4), cfg);
    return read_values(g, phi.params, theta);
  };
  ParamSet maml = adapt_with(AdaptKind::kMaml);
  ParamSet fomaml = adapt_with(AdaptKind::kFomaml);
  for (size_t e = 0; e < maml.size(); ++e)
    for (size_t i = 0; i < maml.entry(e).data.size(); ++i)
      CHECK(std::fabs(maml.entry(e).data[i] - fomaml.entry(e).data[i]) == 0.0);
}

TEST_CASE("anil leaves non-last-layer parameters bit-identical") {
  auto cfgnet = small_net();
  ParamSet theta = nn::init_params(cfgnet);
  Rng rng(14);
  std::vector<double> xv(8), yv(4);
  for (auto& v : xv) v = rng.uniform(-1, 1);
  for (auto& v : yv) v = rng.uniform(-1, 1);

  Graph g;
  ParamNodes tn = bind(g, theta);
  AdaptConfig cfg;
  cfg.kind = AdaptKind::kAnil;
  cfg.steps = 2;
  cfg.alpha = 0.1;
  cfg.adapted_names = {"layer1.weight", "layer1.bias"};
  Solver phi = adapt_gradient(g, tn, support_mse(cfgnet, xv, yv, 4), cfg);

  // untouched layers share the original leaf nodes
  CHECK(phi.params.at("layer0.weight") == tn.at("layer0.weight"));
  CHECK(phi.params.at("layer0.bias") == tn.at("layer0.bias"));
  CHECK(phi.params.at("layer1.weight") != tn.at("layer1.weight"));
  ParamSet out = read_values(g, phi.params, theta);
  for (const char* name : {"layer0.weight", "layer0.bias"}) {
    const auto& before = theta.at(name).data;
    const auto& after = out.at(name).data;
    for (size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
  }
}

TEST_CASE("second-order meta-gradient matches finite differences on a small net") {
  auto cfgnet = small_net();  // 2*4+4 + 4*1+1 = 17 params
  ParamSet theta = nn::init_params(cfgnet);
  Rng rng(24);
  std::vector<double> xs(8), ys(4), xq(12), yq(6);
  for (auto& v : xs) v = rng.uniform(-1, 1);
  for (auto& v : ys) v = rng.uniform(-1, 1);
  for (auto& v : xq) v = rng.uniform(-1, 1);
  for (auto& v : yq) v = rng.uniform(-1, 1);

  auto build_meta = [&](Graph& g, const ParamNodes& pn) {
    AdaptConfig cfg;
    cfg.kind = AdaptKind::kMaml;
    cfg.steps = 2;
    cfg.alpha = 0.08;
    Solver phi = adapt_gradient(g, pn, support_mse(cfgnet, xs, ys, 4), cfg);
    NodeId x = g.constant(Shape{6, 2}, xq);
    return tasks::mse_loss(g, nn::mlp_forward(g, cfgnet, phi.params, x), yq);
  };
  CHECK(check_gradient(build_meta, theta, 1e-5) < 1e-5);
}

namespace {

// Identity embedding so prototype geometry is directly visible.
EmbedFn identity_embed(int64_t dim) {
  return [dim](Graph& g, const ParamNodes&, NodeId x) { return x; };
}

}  // namespace

TEST_CASE("protonet: one support example per class gives that embedding") {
  Graph g;
  ParamNodes none;
  std::vector<double> xs{0.0, 0.0, 2.0, 0.0};
  NodeId x = g.constant(Shape{2, 2}, xs);
  Solver s = adapt_protonet(g, none, identity_embed(2), x, std::vector<int64_t>{0, 1});
  auto protos = g.value(s.prototypes);
  CHECK(protos[0] == 0.0);
  CHECK(protos[2] == 2.0);

  // query halfway between two prototypes -> [0.5, 0.5]
  NodeId q = g.constant(Shape{1, 2}, std::vector<double>{1.0, 0.0});
  auto probs = g.value(protonet_predict(g, s, q));
  CHECK(probs[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("protonet: duplicated support example gives the same prototype") {
  Graph g;
  ParamNodes none;
  NodeId one = g.constant(Shape{1, 2}, std::vector<double>{0.7, -0.3});
  NodeId two = g.constant(Shape{2, 2}, std::vector<double>{0.7, -0.3, 0.7, -0.3});
  Solver a = adapt_protonet(g, none, identity_embed(2), one, std::vector<int64_t>{0});
  Solver b = adapt_protonet(g, none, identity_embed(2), two, std::vector<int64_t>{0, 0});
  auto pa = g.value(a.prototypes), pb = g.value(b.prototypes);
  CHECK(pa[0] == pb[0]);
  CHECK(pa[1] == pb[1]);
}

TEST_CASE("protonet probabilities: rows sum to one, argmax is nearest") {
  Graph g;
  ParamNodes none;
  NodeId x = g.constant(Shape{3, 2}, std::vector<double>{0, 0, 5, 0, 0, 5});
  Solver s = adapt_protonet(g, none, identity_embed(2), x, std::vector<int64_t>{0, 1, 2});
  Rng rng(9);
  std::vector<double> qv(10);
  for (auto& v : qv) v = rng.uniform(-3, 7);
  NodeId q = g.constant(Shape{5, 2}, qv);
  auto probs = g.value(protonet_predict(g, s, q));
  auto protos = g.value(s.prototypes);
  for (int64_t r = 0; r < 5; ++r) {
    double total = 0;
    int64_t best_prob = 0, best_dist = 0;
    double bp = -1, bd = 1e300;
    for (int64_t c = 0; c < 3; ++c) {
      total += probs[r * 3 + c];
      if (probs[r * 3 + c] > bp) {
        bp = probs[r * 3 + c];
        best_prob = c;
      }
      const double dx = qv[r * 2] - protos[c * 2], dy = qv[r * 2 + 1] - protos[c * 2 + 1];
      if (dx * dx + dy * dy < bd) {
        bd = dx * dx + dy * dy;
        best_dist = c;
      }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(best_prob == best_dist);
  }
}

TEST_CASE("protonet: all prototypes equal gives the uniform distribution") {
  Graph g;
  ParamNodes none;
  NodeId x = g.constant(Shape{3, 2}, std::vector<double>{1, 1, 1, 1, 1, 1});
  Solver s = adapt_protonet(g, none, identity_embed(2), x, std::vector<int64_t>{0, 1, 2});
  NodeId q = g.constant(Shape{1, 2}, std::vector<double>{0.2, -4.0});
  auto probs = g.value(protonet_predict(g, s, q));
  for (int c = 0; c < 3; ++c) CHECK(probs[c] == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("protonet at squared distances 0,1,4 matches softmax(0,-1,-4)") {
  Graph g;
  ParamNodes none;
  NodeId x = g.constant(Shape{3, 1}, std::vector<double>{0.0, 1.0, 2.0});
  Solver s = adapt_protonet(g, none, identity_embed(1), x, std::vector<int64_t>{0, 1, 2});
  NodeId q = g.constant(Shape{1, 1}, std::vector<double>{0.0});
  auto probs = g.value(protonet_predict(g, s, q));
  const double e0 = std::exp(0.0), e1 = std::exp(-1.0), e4 = std::exp(-4.0);
  const double z = e0 + e1 + e4;
  CHECK(probs[0] == doctest::Approx(e0 / z).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(e1 / z).epsilon(1e-12));
  CHECK(probs[2] == doctest::Approx(e4 / z).epsilon(1e-12));
}

TEST_CASE("non-finite inner loss reports the step index") {
  Graph g;
  ParamSet theta;
  theta.add("w", Shape{}, std::vector<double>{0.0});
  ParamNodes tn = bind(g, theta);
  AdaptConfig cfg;
  cfg.kind = AdaptKind::kMaml;
  cfg.steps = 1;
  cfg.alpha = 0.1;
  LossFn bad = [](Graph& gg, const ParamNodes& p) { return log_op(gg, p.at("w")); };
  CHECK_THROWS_WITH_AS(adapt_gradient(g, tn, bad, cfg), doctest::Contains("step 0"),
                       NumericError);
}
