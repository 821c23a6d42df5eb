#include "simt/adapt.hpp"

#include <algorithm>
#include <cmath>

#include "simt/errors.hpp"

namespace simt::meta {

AdaptKind adapt_kind_from_string(const std::string& s) {
  if (s == "maml") return AdaptKind::kMaml;
  if (s == "fomaml") return AdaptKind::kFomaml;
  if (s == "anil") return AdaptKind::kAnil;
  if (s == "metasgd") return AdaptKind::kMetaSgd;
  if (s == "protonet") return AdaptKind::kProtonet;
  throw ConfigError("unknown adaptation kind '" + s + "'");
}

const char* adapt_kind_name(AdaptKind k) {
  switch (k) {
    case AdaptKind::kMaml: return "maml";
    case AdaptKind::kFomaml: return "fomaml";
    case AdaptKind::kAnil: return "anil";
    case AdaptKind::kMetaSgd: return "metasgd";
    case AdaptKind::kProtonet: return "protonet";
  }
  return "?";
}

Solver adapt_gradient(ad::Graph& g, const ad::ParamNodes& theta, const LossFn& support_loss,
                      const AdaptConfig& cfg, const ad::ParamNodes* metasgd_alpha,
                      std::optional<int> override_steps) {
  if (cfg.kind == AdaptKind::kProtonet)
    throw Error("adapt_gradient: protonet uses adapt_protonet");
  const bool metasgd = cfg.kind == AdaptKind::kMetaSgd;
  if (metasgd && metasgd_alpha == nullptr)
    throw Error("adapt_gradient: metasgd requires step-size parameters");
  const int steps = metasgd ? 1 : override_steps.value_or(cfg.steps);
  if (steps < 1) throw Error("adapt_gradient: steps must be >= 1");
  const bool create_graph = cfg.second_order && cfg.kind != AdaptKind::kFomaml;

  std::vector<size_t> adapted;
  for (size_t i = 0; i < theta.size(); ++i)
    if (cfg.adapts(theta.names[i])) adapted.push_back(i);
  if (adapted.empty()) throw Error("adapt_gradient: no parameters match adapted_names");

  Solver out;
  out.kind = cfg.kind;
  out.params = theta;
  for (int s = 0; s < steps; ++s) {
    ad::NodeId loss = support_loss(g, out.params);
    if (!std::isfinite(g.scalar(loss)))
      throw NumericError("adapt_gradient: non-finite loss at inner step " + std::to_string(s));
    std::vector<ad::NodeId> wrt;
    wrt.reserve(adapted.size());
    for (size_t i : adapted) wrt.push_back(out.params.nodes[i]);
    std::vector<ad::NodeId> gs = ad::grad(g, loss, wrt, create_graph);
    for (size_t j = 0; j < adapted.size(); ++j) {
      const size_t i = adapted[j];
      ad::NodeId update = metasgd ? ad::mul(g, metasgd_alpha->nodes[i], gs[j])
                                  : ad::scale(g, gs[j], cfg.alpha);
      out.params.nodes[i] = ad::sub(g, out.params.nodes[i], update);
    }
  }
  return out;
}

Solver adapt_protonet(ad::Graph& g, const ad::ParamNodes& theta, const EmbedFn& embed,
                      ad::NodeId support_x, std::span<const int64_t> support_labels) {
  const int64_t n = static_cast<int64_t>(support_labels.size());
  if (n == 0) throw Error("adapt_protonet: empty support set");

  std::vector<int64_t> classes(support_labels.begin(), support_labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const int64_t n_class = static_cast<int64_t>(classes.size());

  std::vector<int64_t> counts(n_class, 0);
  auto local_of = [&](int64_t cls) {
    return std::lower_bound(classes.begin(), classes.end(), cls) - classes.begin();
  };
  for (int64_t cls : support_labels) ++counts[local_of(cls)];
  for (int64_t c = 0; c < n_class; ++c)
    if (counts[c] == 0) throw Error("adapt_protonet: class without support examples");

  ad::NodeId emb = embed(g, theta, support_x);
  // Class-mean matrix: prototypes = M (n_class x n) @ embeddings (n x d).
  std::vector<double> m(n_class * n, 0.0);
  for (int64_t j = 0; j < n; ++j) {
    const int64_t c = local_of(support_labels[j]);
    m[c * n + j] = 1.0 / static_cast<double>(counts[c]);
  }
  Solver out;
  out.kind = AdaptKind::kProtonet;
  out.params = theta;
  out.class_ids = classes;
  out.prototypes = ad::matmul(g, g.constant(ad::Shape{n_class, n}, m), emb);
  return out;
}

ad::NodeId protonet_logits(ad::Graph& g, const Solver& solver, ad::NodeId query_embeddings) {
  if (solver.kind != AdaptKind::kProtonet || solver.prototypes == ad::kNoNode)
    throw Error("protonet_logits: solver is not a prototype solver");
  const ad::Shape qs = g.shape(query_embeddings);
  const ad::Shape ps = g.shape(solver.prototypes);
  if (qs.rank() != 2 || qs[1] != ps[1])
    throw ShapeError("protonet_logits: embeddings " + qs.str() + " vs prototypes " + ps.str());
  const int64_t n_class = ps[0];
  // Squared distances via |q|^2 + |c|^2 - 2 q.c.
  ad::NodeId qn = ad::sum_axis(g, ad::square(g, query_embeddings), 1);
  ad::NodeId pn = ad::sum_axis(g, ad::square(g, solver.prototypes), 1);
  ad::NodeId cross = ad::matmul(g, query_embeddings, ad::transpose(g, solver.prototypes));
  ad::NodeId d2 = ad::sub(g, ad::add(g, ad::expand_axis(g, qn, 1, n_class), pn),
                          ad::scale(g, cross, 2.0));
  return ad::neg(g, d2);
}

ad::NodeId protonet_predict(ad::Graph& g, const Solver& solver, ad::NodeId query_embeddings) {
  return ad::softmax_last(g, protonet_logits(g, solver, query_embeddings));
}

}  // namespace simt::meta
