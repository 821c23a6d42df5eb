#pragma once

#include <cstdint>
#include <vector>

#include "simt/ops.hpp"
#include "simt/param.hpp"
#include "simt/rng.hpp"

namespace simt::nn {

enum class Activation { kRelu, kTanh };

struct MlpConfig {
  int64_t input_dim = 1;
  std::vector<int64_t> hidden_dims;
  int64_t output_dim = 1;
  Activation activation = Activation::kRelu;
  uint64_t seed = 0;

  int num_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }
  std::string weight_name(int layer) const { return "layer" + std::to_string(layer) + ".weight"; }
  std::string bias_name(int layer) const { return "layer" + std::to_string(layer) + ".bias"; }
};

// Inverted dropout on hidden activations: units kept with probability 1-p and
// scaled by 1/(1-p). `layers` selects which hidden activations are masked
// (empty = all); masks come from the caller-owned seed stream.
struct DropoutSpec {
  double p = 0.0;
  std::vector<int> layers;
  uint64_t seed = 0;
};

// Weights uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)); biases zero.
// Deterministic given cfg.seed.
ad::ParamSet init_params(const MlpConfig& cfg);

ad::NodeId mlp_forward(ad::Graph& g, const MlpConfig& cfg, const ad::ParamNodes& params,
                       ad::NodeId x);

// Forward with dropout masks applied after each selected hidden activation.
ad::NodeId mlp_forward(ad::Graph& g, const MlpConfig& cfg, const ad::ParamNodes& params,
                       ad::NodeId x, const DropoutSpec& dropout, Rng& mask_rng);

// Fresh inverted-dropout mask on `activations`. p = 0 returns the input
// unchanged and consumes no randomness.
ad::NodeId dropout_apply(ad::Graph& g, ad::NodeId activations, double p, Rng& rng);

// Plain value forward used where no gradients are needed (rollouts,
// line-search probes). `x` is (batch, input_dim) row-major; `out` must hold
// batch * output_dim doubles.
void mlp_forward_values(const MlpConfig& cfg, const ad::ParamSet& params, const double* x,
                        int64_t batch, double* out);

}  // namespace simt::nn
