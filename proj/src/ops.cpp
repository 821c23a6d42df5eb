#include "simt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace simt::ad {

namespace {

[[noreturn]] void shape_fail(Op op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + a.str() + " and " +
                   b.str());
}

[[noreturn]] void shape_fail(Op op, const Shape& a, const std::string& why) {
  throw ShapeError(std::string(op_name(op)) + ": " + why + " (operand " + a.str() + ")");
}

// Resolves broadcast for elementwise binary ops: returns the output shape and
// whether each side is the smaller (trailing-matched) operand.
Shape binary_shape(Op op, const Shape& a, const Shape& b, bool& a_small, bool& b_small) {
  a_small = b_small = false;
  if (a == b) return a;
  if (a.is_trailing_of(b)) {
    a_small = true;
    return b;
  }
  if (b.is_trailing_of(a)) {
    b_small = true;
    return a;
  }
  shape_fail(op, a, b);
}

// outer/axis/inner decomposition for axis ops on row-major data.
void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& n, int64_t& inner) {
  outer = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  n = s[axis];
  inner = 1;
  for (int i = axis + 1; i < s.rank(); ++i) inner *= s[i];
}

void check_axis(Op op, const Shape& s, int axis) {
  if (axis < 0 || axis >= s.rank()) shape_fail(op, s, "axis " + std::to_string(axis) + " out of range");
}

}  // namespace

namespace kernels {

// Row-major GEMM with an ikj loop so every c[i,j] accumulates over k in a
// fixed order, independent of buffer alignment; the j loop auto-vectorizes.
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* __restrict__ crow = c + i * n;
    std::fill_n(crow, n, 0.0);
    const double* arow = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* __restrict__ brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double mx = xr[0];
    for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
    double z = 0;
    for (int64_t c = 0; c < cols; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      z += yr[c];
    }
    const double inv = 1.0 / z;
    for (int64_t c = 0; c < cols; ++c) yr[c] *= inv;
  }
}

void log_softmax_rows(const double* x, double* y, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double mx = xr[0];
    for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
    double z = 0;
    for (int64_t c = 0; c < cols; ++c) z += std::exp(xr[c] - mx);
    const double lse = mx + std::log(z);
    for (int64_t c = 0; c < cols; ++c) yr[c] = xr[c] - lse;
  }
}

}  // namespace kernels

namespace {

NodeId binary(Graph& g, Op op, NodeId a, NodeId b) {
  const Shape sa = g.shape(a);
  const Shape sb = g.shape(b);
  bool a_small, b_small;
  const Shape out = binary_shape(op, sa, sb, a_small, b_small);
  const NodeId parents[2] = {a, b};
  NodeId id = g.make(op, out, parents);
  const double* pa = g.value(a).data();
  const double* pb = g.value(b).data();
  double* pc = g.mutable_value(id).data();
  const int64_t n = out.numel();
  const int64_t ma = a_small ? sa.numel() : n;
  const int64_t mb = b_small ? sb.numel() : n;
  switch (op) {
    case Op::kAdd:
      if (!a_small && !b_small)
        for (int64_t i = 0; i < n; ++i) pc[i] = pa[i] + pb[i];
      else
        for (int64_t i = 0; i < n; ++i) pc[i] = pa[i % ma] + pb[i % mb];
      break;
    case Op::kSub:
      if (!a_small && !b_small)
        for (int64_t i = 0; i < n; ++i) pc[i] = pa[i] - pb[i];
      else
        for (int64_t i = 0; i < n; ++i) pc[i] = pa[i % ma] - pb[i % mb];
      break;
    case Op::kMul:
    case Op::kMaskMul:
      if (!a_small && !b_small)
        for (int64_t i = 0; i < n; ++i) pc[i] = pa[i] * pb[i];
      else
        for (int64_t i = 0; i < n; ++i) pc[i] = pa[i % ma] * pb[i % mb];
      break;
    default: shape_fail(op, sa, "not a binary op");
  }
  return id;
}

template <typename F>
NodeId unary(Graph& g, Op op, NodeId x, F f, double a = 0.0, double b = 0.0) {
  const NodeId parents[1] = {x};
  NodeId id = g.make(op, g.shape(x), parents, a, b);
  const double* px = g.value(x).data();
  double* py = g.mutable_value(id).data();
  const int64_t n = g.shape(x).numel();
  for (int64_t i = 0; i < n; ++i) py[i] = f(px[i]);
  return id;
}

}  // namespace

NodeId add(Graph& g, NodeId a, NodeId b) { return binary(g, Op::kAdd, a, b); }
NodeId sub(Graph& g, NodeId a, NodeId b) { return binary(g, Op::kSub, a, b); }
NodeId mul(Graph& g, NodeId a, NodeId b) { return binary(g, Op::kMul, a, b); }

NodeId mask_mul(Graph& g, NodeId x, NodeId mask) {
  if (g.shape(x) != g.shape(mask) && !g.shape(mask).is_trailing_of(g.shape(x)))
    shape_fail(Op::kMaskMul, g.shape(x), g.shape(mask));
  return binary(g, Op::kMaskMul, x, mask);
}

NodeId matmul(Graph& g, NodeId a, NodeId b) {
  const Shape sa = g.shape(a);
  const Shape sb = g.shape(b);
  if (sa.rank() != 2 || sb.rank() != 2 || sa[1] != sb[0]) shape_fail(Op::kMatMul, sa, sb);
  const NodeId parents[2] = {a, b};
  NodeId id = g.make(Op::kMatMul, Shape{sa[0], sb[1]}, parents);
  kernels::matmul(g.value(a).data(), g.value(b).data(), g.mutable_value(id).data(), sa[0], sa[1],
                  sb[1]);
  return id;
}

NodeId transpose(Graph& g, NodeId x) {
  const Shape s = g.shape(x);
  if (s.rank() != 2) shape_fail(Op::kTranspose, s, "rank-2 operand required");
  const NodeId parents[1] = {x};
  NodeId id = g.make(Op::kTranspose, Shape{s[1], s[0]}, parents);
  const double* px = g.value(x).data();
  double* py = g.mutable_value(id).data();
  for (int64_t i = 0; i < s[0]; ++i)
    for (int64_t j = 0; j < s[1]; ++j) py[j * s[0] + i] = px[i * s[1] + j];
  return id;
}

NodeId neg(Graph& g, NodeId x) {
  return unary(g, Op::kNeg, x, [](double v) { return -v; });
}

NodeId affine(Graph& g, NodeId x, double m, double c) {
  return unary(g, Op::kAffine, x, [m, c](double v) { return m * v + c; }, m, c);
}

NodeId scale(Graph& g, NodeId x, double c) { return affine(g, x, c, 0.0); }

NodeId relu(Graph& g, NodeId x) {
  return unary(g, Op::kRelu, x, [](double v) { return v > 0 ? v : 0.0; });
}

NodeId tanh_op(Graph& g, NodeId x) {
  return unary(g, Op::kTanh, x, [](double v) { return std::tanh(v); });
}

NodeId exp_op(Graph& g, NodeId x) {
  return unary(g, Op::kExp, x, [](double v) { return std::exp(v); });
}

NodeId log_op(Graph& g, NodeId x) {
  return unary(g, Op::kLog, x, [](double v) { return std::log(v); });
}

NodeId sin_op(Graph& g, NodeId x) {
  return unary(g, Op::kSin, x, [](double v) { return std::sin(v); });
}

NodeId cos_op(Graph& g, NodeId x) {
  return unary(g, Op::kCos, x, [](double v) { return std::cos(v); });
}

NodeId square(Graph& g, NodeId x) {
  return unary(g, Op::kSquare, x, [](double v) { return v * v; });
}

NodeId recip(Graph& g, NodeId x) {
  return unary(g, Op::kRecip, x, [](double v) { return 1.0 / v; });
}

NodeId sum(Graph& g, NodeId x) {
  const NodeId parents[1] = {x};
  NodeId id = g.make(Op::kSum, Shape{}, parents);
  const double* px = g.value(x).data();
  const int64_t n = g.shape(x).numel();
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += px[i];
  *g.mutable_value(id).data() = acc;
  return id;
}

NodeId mean(Graph& g, NodeId x) {
  const NodeId parents[1] = {x};
  NodeId id = g.make(Op::kMean, Shape{}, parents);
  const double* px = g.value(x).data();
  const int64_t n = g.shape(x).numel();
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += px[i];
  *g.mutable_value(id).data() = acc / static_cast<double>(n);
  return id;
}

NodeId sum_axis(Graph& g, NodeId x, int axis) {
  const Shape s = g.shape(x);
  check_axis(Op::kSumAxis, s, axis);
  int64_t outer, n, inner;
  axis_split(s, axis, outer, n, inner);
  const NodeId parents[1] = {x};
  NodeId id = g.make(Op::kSumAxis, s.drop_axis(axis), parents, 0, 0, axis);
  const double* px = g.value(x).data();
  double* py = g.mutable_value(id).data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      double acc = 0;
      for (int64_t k = 0; k < n; ++k) acc += px[(o * n + k) * inner + i];
      py[o * inner + i] = acc;
    }
  return id;
}

NodeId max_axis(Graph& g, NodeId x, int axis) {
  const Shape s = g.shape(x);
  check_axis(Op::kMaxAxis, s, axis);
  int64_t outer, n, inner;
  axis_split(s, axis, outer, n, inner);
  const NodeId parents[1] = {x};
  NodeId id = g.make(Op::kMaxAxis, s.drop_axis(axis), parents, 0, 0, axis);
  const double* px = g.value(x).data();
  double* py = g.mutable_value(id).data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      double best = px[o * n * inner + i];
      for (int64_t k = 1; k < n; ++k) best = std::max(best, px[(o * n + k) * inner + i]);
      py[o * inner + i] = best;
    }
  return id;
}

NodeId expand_axis(Graph& g, NodeId x, int axis, int64_t n) {
  const Shape s = g.shape(x);
  if (axis < 0 || axis > s.rank())
    shape_fail(Op::kExpandAxis, s, "axis " + std::to_string(axis) + " out of range");
  const Shape out = s.insert_axis(axis, n);
  int64_t outer, nn, inner;
  axis_split(out, axis, outer, nn, inner);
  const NodeId parents[1] = {x};
  NodeId id = g.make(Op::kExpandAxis, out, parents, 0, 0, axis, static_cast<int32_t>(n));
  const double* px = g.value(x).data();
  double* py = g.mutable_value(id).data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t k = 0; k < nn; ++k)
      std::memcpy(py + (o * nn + k) * inner, px + o * inner, inner * sizeof(double));
  return id;
}

NodeId broadcast_to(Graph& g, NodeId x, const Shape& target) {
  const Shape s = g.shape(x);
  if (!s.is_trailing_of(target)) shape_fail(Op::kBroadcastTo, s, target);
  const NodeId parents[1] = {x};
  NodeId id = g.make(Op::kBroadcastTo, target, parents);
  const double* px = g.value(x).data();
  double* py = g.mutable_value(id).data();
  const int64_t m = s.numel();
  const int64_t n = target.numel();
  for (int64_t i = 0; i < n; i += m) std::memcpy(py + i, px, m * sizeof(double));
  return id;
}

NodeId reduce_to(Graph& g, NodeId x, const Shape& target) {
  const Shape s = g.shape(x);
  if (!target.is_trailing_of(s)) shape_fail(Op::kReduceTo, s, target);
  const NodeId parents[1] = {x};
  NodeId id = g.make(Op::kReduceTo, target, parents);
  const double* px = g.value(x).data();
  double* py = g.mutable_value(id).data();
  const int64_t m = target.numel();
  const int64_t n = s.numel();
  std::fill_n(py, m, 0.0);
  for (int64_t i = 0; i < n; ++i) py[i % m] += px[i];
  return id;
}

NodeId softmax_last(Graph& g, NodeId x) {
  const Shape s = g.shape(x);
  if (s.rank() < 1) shape_fail(Op::kSoftmaxLast, s, "rank >= 1 required");
  const NodeId parents[1] = {x};
  NodeId id = g.make(Op::kSoftmaxLast, s, parents);
  kernels::softmax_rows(g.value(x).data(), g.mutable_value(id).data(), s.numel() / s.last(),
                        s.last());
  return id;
}

NodeId log_softmax_last(Graph& g, NodeId x) {
  const Shape s = g.shape(x);
  if (s.rank() < 1) shape_fail(Op::kLogSoftmaxLast, s, "rank >= 1 required");
  const NodeId parents[1] = {x};
  NodeId id = g.make(Op::kLogSoftmaxLast, s, parents);
  kernels::log_softmax_rows(g.value(x).data(), g.mutable_value(id).data(), s.numel() / s.last(),
                            s.last());
  return id;
}

NodeId concat(Graph& g, std::span<const NodeId> parts, int axis) {
  if (parts.empty()) throw ShapeError("concatenate: no operands");
  const Shape first = g.shape(parts[0]);
  check_axis(Op::kConcat, first, axis);
  int64_t total = 0;
  for (NodeId p : parts) {
    const Shape& sp = g.shape(p);
    if (sp.rank() != first.rank()) shape_fail(Op::kConcat, first, sp);
    for (int i = 0; i < sp.rank(); ++i)
      if (i != axis && sp[i] != first[i]) shape_fail(Op::kConcat, first, sp);
    total += sp[axis];
  }
  const Shape out = first.with_dim(axis, total);
  NodeId id = g.make(Op::kConcat, out, parts, 0, 0, axis);
  int64_t outer, n, inner;
  axis_split(out, axis, outer, n, inner);
  double* py = g.mutable_value(id).data();
  int64_t off = 0;
  for (NodeId p : parts) {
    const int64_t np = g.shape(p)[axis];
    const double* px = g.value(p).data();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(py + (o * n + off) * inner, px + o * np * inner, np * inner * sizeof(double));
    off += np;
  }
  return id;
}

NodeId slice(Graph& g, NodeId x, int axis, int64_t start, int64_t len) {
  const Shape s = g.shape(x);
  check_axis(Op::kSlice, s, axis);
  if (start < 0 || len < 1 || start + len > s[axis])
    shape_fail(Op::kSlice, s,
               "range [" + std::to_string(start) + "," + std::to_string(start + len) + ")");
  const Shape out = s.with_dim(axis, len);
  const NodeId parents[1] = {x};
  NodeId id = g.make(Op::kSlice, out, parents, 0, 0, axis, static_cast<int32_t>(start),
                     static_cast<int32_t>(len));
  int64_t outer, n, inner;
  axis_split(s, axis, outer, n, inner);
  const double* px = g.value(x).data();
  double* py = g.mutable_value(id).data();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(py + o * len * inner, px + (o * n + start) * inner, len * inner * sizeof(double));
  return id;
}

NodeId pad_axis(Graph& g, NodeId x, int axis, int64_t before, int64_t after) {
  const Shape s = g.shape(x);
  check_axis(Op::kPad, s, axis);
  if (before < 0 || after < 0) shape_fail(Op::kPad, s, "negative padding");
  const Shape out = s.with_dim(axis, s[axis] + before + after);
  const NodeId parents[1] = {x};
  NodeId id = g.make(Op::kPad, out, parents, 0, 0, axis, static_cast<int32_t>(before),
                     static_cast<int32_t>(after));
  int64_t outer, n, inner;
  axis_split(out, axis, outer, n, inner);
  const int64_t nx = s[axis];
  const double* px = g.value(x).data();
  double* py = g.mutable_value(id).data();
  std::fill_n(py, out.numel(), 0.0);
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(py + (o * n + before) * inner, px + o * nx * inner, nx * inner * sizeof(double));
  return id;
}

}  // namespace simt::ad
