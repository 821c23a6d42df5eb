#include "simt/graph.hpp"

#include <algorithm>
#include <cstring>

namespace simt::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConst: return "const";
    case Op::kAdd: return "add";
    case Op::kSub: return "subtract";
    case Op::kMul: return "multiply";
    case Op::kMaskMul: return "mask-multiply";
    case Op::kMatMul: return "matmul";
    case Op::kNeg: return "negate";
    case Op::kAffine: return "affine";
    case Op::kRelu: return "relu";
    case Op::kTanh: return "tanh";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kSquare: return "square";
    case Op::kRecip: return "reciprocal";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kSumAxis: return "sum-axis";
    case Op::kMaxAxis: return "max-axis";
    case Op::kExpandAxis: return "expand-axis";
    case Op::kBroadcastTo: return "broadcast";
    case Op::kReduceTo: return "reduce";
    case Op::kSoftmaxLast: return "softmax";
    case Op::kLogSoftmaxLast: return "log-softmax";
    case Op::kConcat: return "concatenate";
    case Op::kSlice: return "slice";
    case Op::kPad: return "pad";
    case Op::kTranspose: return "transpose";
  }
  return "?";
}

double* Graph::alloc_values(int64_t count) {
  if (count == 0) count = 1;
  while (active_chunk_ < value_chunks_.size()) {
    ValueChunk& c = value_chunks_[active_chunk_];
    if (c.used + count <= c.capacity) {
      double* p = c.data.get() + c.used;
      c.used += count;
      return p;
    }
    // A chunk we rewound may still fit later small requests; move on.
    ++active_chunk_;
  }
  ValueChunk c;
  c.capacity = std::max(count, kChunkDoubles);
  c.data = std::make_unique<double[]>(c.capacity);
  c.used = count;
  value_chunks_.push_back(std::move(c));
  active_chunk_ = value_chunks_.size() - 1;
  return value_chunks_.back().data.get();
}

const NodeId* Graph::store_parents(std::span<const NodeId> parents) {
  if (parents.empty()) return nullptr;
  const int64_t count = static_cast<int64_t>(parents.size());
  if (parent_chunks_.empty() || parent_chunk_used_ + count > kParentChunk) {
    parent_chunks_.push_back(std::make_unique<NodeId[]>(std::max(count, kParentChunk)));
    parent_chunk_used_ = 0;
  }
  NodeId* dst = parent_chunks_.back().get() + parent_chunk_used_;
  parent_chunk_used_ += count;
  std::memcpy(dst, parents.data(), count * sizeof(NodeId));
  return dst;
}

NodeId Graph::make(Op op, const Shape& shape, std::span<const NodeId> parents, double a, double b,
                   int32_t axis, int32_t i0, int32_t i1, bool requires_grad) {
  Node n;
  n.op = op;
  n.requires_grad = requires_grad;
  n.num_parents = static_cast<int16_t>(parents.size());
  n.axis = axis;
  n.i0 = i0;
  n.i1 = i1;
  n.shape = shape;
  n.a = a;
  n.b = b;
  n.value = alloc_values(shape.numel());
  n.parents = store_parents(parents);
  nodes_.push_back(n);
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::leaf(const Shape& shape, std::span<const double> values, bool requires_grad) {
  if (static_cast<int64_t>(values.size()) != shape.numel())
    throw ShapeError("leaf: buffer length " + std::to_string(values.size()) +
                     " != numel of " + shape.str());
  NodeId id = make(Op::kLeaf, shape, {}, 0, 0, -1, 0, 0, requires_grad);
  std::memcpy(nodes_[id].value, values.data(), values.size() * sizeof(double));
  return id;
}

NodeId Graph::constant(const Shape& shape, std::span<const double> values) {
  if (static_cast<int64_t>(values.size()) != shape.numel())
    throw ShapeError("constant: buffer length mismatch for " + shape.str());
  NodeId id = make(Op::kConst, shape, {});
  std::memcpy(nodes_[id].value, values.data(), values.size() * sizeof(double));
  return id;
}

NodeId Graph::constant_scalar(double v) {
  NodeId id = make(Op::kConst, Shape{}, {});
  *nodes_[id].value = v;
  return id;
}

NodeId Graph::constant_fill(const Shape& shape, double v) {
  NodeId id = make(Op::kConst, shape, {});
  std::fill_n(nodes_[id].value, shape.numel(), v);
  return id;
}

NodeId Graph::detach(NodeId src) {
  return constant(nodes_[src].shape, value(src));
}

void Graph::clear() {
  nodes_.clear();
  for (ValueChunk& c : value_chunks_) c.used = 0;
  active_chunk_ = 0;
  if (parent_chunks_.size() > 1) parent_chunks_.resize(1);
  parent_chunk_used_ = 0;
}

}  // namespace simt::ad
