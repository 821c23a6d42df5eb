#include "simt/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "simt/errors.hpp"

namespace simt::nn {

namespace {

std::vector<int64_t> layer_dims(const MlpConfig& cfg) {
  std::vector<int64_t> dims;
  dims.push_back(cfg.input_dim);
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(cfg.output_dim);
  return dims;
}

bool masked_layer(const DropoutSpec& d, int layer) {
  return d.layers.empty() || std::find(d.layers.begin(), d.layers.end(), layer) != d.layers.end();
}

}  // namespace

ad::ParamSet init_params(const MlpConfig& cfg) {
  if (cfg.input_dim < 1 || cfg.output_dim < 1) throw Error("MlpConfig: dims must be >= 1");
  for (int64_t h : cfg.hidden_dims)
    if (h < 1) throw Error("MlpConfig: dims must be >= 1");

  Rng rng(cfg.seed);
  ad::ParamSet params;
  const auto dims = layer_dims(cfg);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const int64_t fan_in = dims[l], fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    params.add(cfg.weight_name(static_cast<int>(l)), ad::Shape{fan_in, fan_out}, std::move(w));
    params.add_zeros(cfg.bias_name(static_cast<int>(l)), ad::Shape{fan_out});
  }
  return params;
}

ad::NodeId dropout_apply(ad::Graph& g, ad::NodeId activations, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw Error("dropout: p must be in [0,1)");
  if (p == 0.0) return activations;
  const ad::Shape s = g.shape(activations);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(s.numel());
  for (auto& m : mask) m = (rng.uniform() >= p) ? keep_scale : 0.0;
  return ad::mask_mul(g, activations, g.constant(s, mask));
}

namespace {

ad::NodeId forward_impl(ad::Graph& g, const MlpConfig& cfg, const ad::ParamNodes& params,
                        ad::NodeId x, const DropoutSpec* dropout, Rng* mask_rng) {
  if (g.shape(x).rank() != 2 || g.shape(x)[1] != cfg.input_dim)
    throw ShapeError("mlp_forward: input " + g.shape(x).str() + " does not match input_dim " +
                     std::to_string(cfg.input_dim));
  ad::NodeId h = x;
  const int layers = cfg.num_layers();
  for (int l = 0; l < layers; ++l) {
    h = ad::add(g, ad::matmul(g, h, params.at(cfg.weight_name(l))), params.at(cfg.bias_name(l)));
    if (l + 1 < layers) {
      h = cfg.activation == Activation::kRelu ? ad::relu(g, h) : ad::tanh_op(g, h);
      if (dropout && dropout->p > 0.0 && masked_layer(*dropout, l))
        h = dropout_apply(g, h, dropout->p, *mask_rng);
    }
  }
  return h;
}

}  // namespace

ad::NodeId mlp_forward(ad::Graph& g, const MlpConfig& cfg, const ad::ParamNodes& params,
                       ad::NodeId x) {
  return forward_impl(g, cfg, params, x, nullptr, nullptr);
}

ad::NodeId mlp_forward(ad::Graph& g, const MlpConfig& cfg, const ad::ParamNodes& params,
                       ad::NodeId x, const DropoutSpec& dropout, Rng& mask_rng) {
  return forward_impl(g, cfg, params, x, &dropout, &mask_rng);
}

void mlp_forward_values(const MlpConfig& cfg, const ad::ParamSet& params, const double* x,
                        int64_t batch, double* out) {
  const auto dims = layer_dims(cfg);
  std::vector<double> cur(x, x + batch * cfg.input_dim);
  std::vector<double> next;
  const int layers = cfg.num_layers();
  for (int l = 0; l < layers; ++l) {
    const auto& w = params.at(cfg.weight_name(l));
    const auto& b = params.at(cfg.bias_name(l));
    const int64_t in = dims[l], outd = dims[l + 1];
    next.resize(batch * outd);
    ad::kernels::matmul(cur.data(), w.data.data(), next.data(), batch, in, outd);
    for (int64_t r = 0; r < batch; ++r)
      for (int64_t c = 0; c < outd; ++c) next[r * outd + c] += b.data[c];
    if (l + 1 < layers) {
      if (cfg.activation == Activation::kRelu)
        for (auto& v : next) v = v > 0 ? v : 0.0;
      else
        for (auto& v : next) v = std::tanh(v);
    }
    cur.swap(next);
  }
  std::copy(cur.begin(), cur.end(), out);
}

}  // namespace simt::nn
