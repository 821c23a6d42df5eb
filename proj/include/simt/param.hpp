#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "simt/graph.hpp"

namespace simt::ad {

// Named, shaped, flat parameter collection. Entry order is fixed at
// insertion and two ParamSets are compatible iff names and shapes match
// pairwise in order.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> data;
  };

  void add(const std::string& name, const Shape& shape, std::vector<double> data);
  void add_zeros(const std::string& name, const Shape& shape);

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Entry& entry(size_t i) const { return entries_[i]; }
  Entry& entry(size_t i) { return entries_[i]; }
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const Entry& at(const std::string& name) const;
  Entry& at(const std::string& name);

  int64_t scalar_count() const;
  bool compatible(const ParamSet& other) const;

  // Flattened view in entry order.
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Parameter entries bound as graph leaves, in ParamSet entry order.
struct ParamNodes {
  std::vector<std::string> names;
  std::vector<NodeId> nodes;

  NodeId at(const std::string& name) const;
  size_t size() const { return nodes.size(); }
};

ParamNodes bind(Graph& g, const ParamSet& params, bool requires_grad = true);

// Reads current node values back into a ParamSet shaped like `ref`.
ParamSet read_values(const Graph& g, const ParamNodes& nodes, const ParamSet& ref);

// Central-difference gradient check. `build` constructs the scalar loss for
// bound parameters; the analytic gradient is compared per coordinate against
// (f(x+eps) - f(x-eps)) / (2 eps) with relative error denominator
// max(|analytic|, |numeric|, 1e-8). Returns the max relative error.
double check_gradient(const std::function<NodeId(Graph&, const ParamNodes&)>& build,
                      const ParamSet& at, double eps);

}  // namespace simt::ad
