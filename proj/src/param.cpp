#include "simt/param.hpp"

#include <cmath>

#include "simt/errors.hpp"
#include "simt/grad.hpp"

namespace simt::ad {

void ParamSet::add(const std::string& name, const Shape& shape, std::vector<double> data) {
  if (index_.count(name)) throw Error("ParamSet: duplicate entry '" + name + "'");
  if (static_cast<int64_t>(data.size()) != shape.numel())
    throw ShapeError("ParamSet: entry '" + name + "' buffer length mismatch for " + shape.str());
  index_[name] = entries_.size();
  entries_.push_back({name, shape, std::move(data)});
}

void ParamSet::add_zeros(const std::string& name, const Shape& shape) {
  add(name, shape, std::vector<double>(shape.numel(), 0.0));
}

const ParamSet::Entry& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("ParamSet: no entry '" + name + "'");
  return entries_[it->second];
}

ParamSet::Entry& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("ParamSet: no entry '" + name + "'");
  return entries_[it->second];
}

int64_t ParamSet::scalar_count() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.shape.numel();
  return n;
}

bool ParamSet::compatible(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name != other.entries_[i].name || entries_[i].shape != other.entries_[i].shape)
      return false;
  return true;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (const auto& e : entries_) out.insert(out.end(), e.data.begin(), e.data.end());
  return out;
}

void ParamSet::assign_flat(std::span<const double> flat) {
  if (static_cast<int64_t>(flat.size()) != scalar_count())
    throw ShapeError("ParamSet: flat buffer length mismatch");
  size_t off = 0;
  for (auto& e : entries_) {
    std::copy(flat.begin() + off, flat.begin() + off + e.data.size(), e.data.begin());
    off += e.data.size();
  }
}

NodeId ParamNodes::at(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return nodes[i];
  throw Error("ParamNodes: no entry '" + name + "'");
}

ParamNodes bind(Graph& g, const ParamSet& params, bool requires_grad) {
  ParamNodes out;
  out.names.reserve(params.size());
  out.nodes.reserve(params.size());
  for (const auto& e : params) {
    out.names.push_back(e.name);
    out.nodes.push_back(g.leaf(e.shape, e.data, requires_grad));
  }
  return out;
}

ParamSet read_values(const Graph& g, const ParamNodes& nodes, const ParamSet& ref) {
  ParamSet out;
  for (size_t i = 0; i < nodes.size(); ++i) {
    auto v = g.value(nodes.nodes[i]);
    out.add(nodes.names[i], ref.entry(i).shape, std::vector<double>(v.begin(), v.end()));
  }
  return out;
}

double check_gradient(const std::function<NodeId(Graph&, const ParamNodes&)>& build,
                      const ParamSet& at, double eps) {
  if (eps < 1e-7 || eps > 1e-3) throw Error("check_gradient: eps out of [1e-7, 1e-3]");

  Graph g;
  ParamNodes pn = bind(g, at);
  NodeId loss = build(g, pn);
  if (!std::isfinite(g.scalar(loss))) throw NumericError("check_gradient: non-finite loss");
  std::vector<NodeId> gs = grad(g, loss, pn.nodes, /*create_graph=*/false);

  auto eval_at = [&](const ParamSet& p) {
    Graph gg;
    ParamNodes nn = bind(gg, p);
    const double v = gg.scalar(build(gg, nn));
    if (!std::isfinite(v)) throw NumericError("check_gradient: non-finite loss at probe point");
    return v;
  };

  double worst = 0.0;
  ParamSet probe = at;
  for (size_t e = 0; e < at.size(); ++e) {
    auto analytic = g.value(gs[e]);
    for (size_t i = 0; i < probe.entry(e).data.size(); ++i) {
      const double orig = probe.entry(e).data[i];
      probe.entry(e).data[i] = orig + eps;
      const double fp = eval_at(probe);
      probe.entry(e).data[i] = orig - eps;
      const double fm = eval_at(probe);
      probe.entry(e).data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
      worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace simt::ad
