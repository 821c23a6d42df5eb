#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "simt/grad.hpp"
#include "simt/ops.hpp"
#include "simt/param.hpp"

namespace simt::meta {

enum class AdaptKind { kMaml, kFomaml, kAnil, kMetaSgd, kProtonet };

AdaptKind adapt_kind_from_string(const std::string& s);
const char* adapt_kind_name(AdaptKind k);

struct AdaptConfig {
  AdaptKind kind = AdaptKind::kMaml;
  int steps = 5;
  double alpha = 0.01;
  bool second_order = true;
  // Names of the entries the inner loop updates; empty = all. ANIL sets this
  // to the final weight matrix and its bias.
  std::vector<std::string> adapted_names;
  int eval_steps = 10;

  bool adapts(const std::string& name) const {
    if (adapted_names.empty()) return true;
    for (const auto& n : adapted_names)
      if (n == name) return true;
    return false;
  }
};

// Per-parameter learned step sizes for MetaSGD; same names/shapes as theta.
struct MetaSGDState {
  ad::ParamSet alpha;
};

// Builds the scalar support loss at the given parameter nodes.
using LossFn = std::function<ad::NodeId(ad::Graph&, const ad::ParamNodes&)>;
// Builds embeddings (batch, embed_dim) at the given parameter nodes.
using EmbedFn = std::function<ad::NodeId(ad::Graph&, const ad::ParamNodes&, ad::NodeId x)>;

// Task-specific solver: adapted parameter nodes for gradient kinds, or class
// prototypes plus the (unadapted) embedding parameters for ProtoNet.
struct Solver {
  AdaptKind kind = AdaptKind::kMaml;
  ad::ParamNodes params;
  ad::NodeId prototypes = ad::kNoNode;
  std::vector<int64_t> class_ids;
};

// SGD inner loop from `theta`. MAML keeps inner gradients differentiable
// (second_order), FOMAML detaches them, ANIL updates only adapted_names,
// MetaSGD takes exactly one step with elementwise alpha nodes.
Solver adapt_gradient(ad::Graph& g, const ad::ParamNodes& theta, const LossFn& support_loss,
                      const AdaptConfig& cfg, const ad::ParamNodes* metasgd_alpha = nullptr,
                      std::optional<int> override_steps = std::nullopt);

// Prototypes c_i = mean of embed(x) over class-i support rows; no gradient
// steps.
Solver adapt_protonet(ad::Graph& g, const ad::ParamNodes& theta, const EmbedFn& embed,
                      ad::NodeId support_x, std::span<const int64_t> support_labels);

// Negated squared Euclidean distances to the prototypes; softmax of these is
// the class distribution.
ad::NodeId protonet_logits(ad::Graph& g, const Solver& solver, ad::NodeId query_embeddings);
ad::NodeId protonet_predict(ad::Graph& g, const Solver& solver, ad::NodeId query_embeddings);

}  // namespace simt::meta
