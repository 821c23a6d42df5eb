#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "simt/shape.hpp"

namespace simt::ad {

using NodeId = int32_t;
constexpr NodeId kNoNode = -1;

enum class Op : uint8_t {
  kLeaf,
  kConst,
  kAdd,
  kSub,
  kMul,
  kMaskMul,
  kMatMul,
  kNeg,
  kAffine,  // a*x + b
  kRelu,
  kTanh,
  kExp,
  kLog,
  kSin,
  kCos,
  kSquare,
  kRecip,
  kSum,
  kMean,
  kSumAxis,
  kMaxAxis,
  kExpandAxis,
  kBroadcastTo,
  kReduceTo,
  kSoftmaxLast,
  kLogSoftmaxLast,
  kConcat,
  kSlice,
  kPad,
  kTranspose,
};

const char* op_name(Op op);

struct Node {
  Op op;
  bool requires_grad;
  int16_t num_parents;
  int32_t axis;  // axis for reductions/slice/concat, else -1
  int32_t i0;    // slice start / pad before / expand size
  int32_t i1;    // slice len / pad after
  Shape shape;
  double a;  // affine scale
  double b;  // affine shift
  double* value;
  const NodeId* parents;
};

// Append-only computation tape. Node values and parent lists live in chunked
// arenas with stable addresses; clear() rewinds the arenas without releasing
// memory so a Graph can be reused across tasks and steps.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  NodeId leaf(const Shape& shape, std::span<const double> values, bool requires_grad = true);
  NodeId constant(const Shape& shape, std::span<const double> values);
  NodeId constant_scalar(double v);
  NodeId constant_fill(const Shape& shape, double v);
  NodeId zeros(const Shape& shape) { return constant_fill(shape, 0.0); }

  // Constant leaf holding a copy of `id`'s current value; cuts gradient flow.
  NodeId detach(NodeId id);

  const Node& node(NodeId id) const { return nodes_[id]; }
  std::span<const double> value(NodeId id) const {
    const Node& n = nodes_[id];
    return {n.value, static_cast<size_t>(n.shape.numel())};
  }
  double scalar(NodeId id) const { return *nodes_[id].value; }
  // By value: appending nodes reallocates the node vector, so references
  // into it must not be held across make()/builder calls.
  Shape shape(NodeId id) const { return nodes_[id].shape; }
  int32_t size() const { return static_cast<int32_t>(nodes_.size()); }

  void clear();

  // Raw node append used by the op builders; value buffer is allocated but
  // uninitialized.
  NodeId make(Op op, const Shape& shape, std::span<const NodeId> parents, double a = 0.0,
              double b = 0.0, int32_t axis = -1, int32_t i0 = 0, int32_t i1 = 0,
              bool requires_grad = false);

  std::span<double> mutable_value(NodeId id) {
    Node& n = nodes_[id];
    return {n.value, static_cast<size_t>(n.shape.numel())};
  }

 private:
  double* alloc_values(int64_t count);
  const NodeId* store_parents(std::span<const NodeId> parents);

  static constexpr int64_t kChunkDoubles = 1 << 16;

  struct ValueChunk {
    std::unique_ptr<double[]> data;
    int64_t capacity = 0;
    int64_t used = 0;
  };

  std::vector<Node> nodes_;
  std::vector<ValueChunk> value_chunks_;
  size_t active_chunk_ = 0;
  std::vector<std::unique_ptr<NodeId[]>> parent_chunks_;
  int64_t parent_chunk_used_ = 0;
  static constexpr int64_t kParentChunk = 1 << 14;
};

}  // namespace simt::ad
