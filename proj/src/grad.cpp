#include "simt/grad.hpp"

#include <cmath>
#include <cstring>

#include "simt/ops.hpp"

namespace simt::ad {

namespace {

// Marks nodes from which at least one wrt node is reachable through parent
// edges; adjoints are only propagated along marked nodes.
std::vector<char> useful_set(const Graph& g, int32_t upto, std::span<const NodeId> wrt) {
  std::vector<char> useful(upto, 0);
  for (NodeId w : wrt) {
    if (w < 0 || w >= upto) throw ShapeError("grad: wrt node not in graph");
    useful[w] = 1;
  }
  for (NodeId i = 0; i < upto; ++i) {
    if (useful[i]) continue;
    const Node& nd = g.node(i);
    for (int p = 0; p < nd.num_parents; ++p) {
      if (useful[nd.parents[p]]) {
        useful[i] = 1;
        break;
      }
    }
  }
  return useful;
}

// Constant 0/1 mask of n's input positivity (relu derivative).
NodeId relu_mask(Graph& g, const Node& nd) {
  NodeId m = g.make(Op::kConst, nd.shape, {});
  const double* x = g.node(nd.parents[0]).value;
  double* pm = g.mutable_value(m).data();
  const int64_t n = nd.shape.numel();
  for (int64_t i = 0; i < n; ++i) pm[i] = x[i] > 0 ? 1.0 : 0.0;
  return m;
}

// Constant indicator of the (first) max position along `axis`.
NodeId argmax_mask(Graph& g, const Node& nd) {
  const Node& p = g.node(nd.parents[0]);
  NodeId m = g.make(Op::kConst, p.shape, {});
  double* pm = g.mutable_value(m).data();
  const double* x = p.value;
  int64_t outer = 1, n = p.shape[nd.axis], inner = 1;
  for (int i = 0; i < nd.axis; ++i) outer *= p.shape[i];
  for (int i = nd.axis + 1; i < p.shape.rank(); ++i) inner *= p.shape[i];
  std::fill_n(pm, p.shape.numel(), 0.0);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      int64_t best = 0;
      double bv = x[o * n * inner + i];
      for (int64_t k = 1; k < n; ++k) {
        const double v = x[(o * n + k) * inner + i];
        if (v > bv) {
          bv = v;
          best = k;
        }
      }
      pm[(o * n + best) * inner + i] = 1.0;
    }
  return m;
}

// ---------------------------------------------------------------------------
// Node mode: adjoints are graph nodes, differentiable again.
// ---------------------------------------------------------------------------

class NodeBackward {
 public:
  NodeBackward(Graph& g, int32_t upto, const std::vector<char>& useful)
      : g_(g), useful_(useful), adj_(upto, kNoNode) {}

  void seed(NodeId out) { adj_[out] = g_.constant_scalar(1.0); }

  void run(NodeId out) {
    for (NodeId id = out; id >= 0; --id) {
      if (adj_[id] == kNoNode) continue;
      const Node nd = g_.node(id);  // copy: emitting nodes may reallocate
      const NodeId gid = adj_[id];
      backprop(id, nd, gid);
    }
  }

  NodeId adjoint(NodeId id) const { return adj_[id]; }

 private:
  void accum(NodeId p, NodeId contrib) {
    adj_[p] = (adj_[p] == kNoNode) ? contrib : add(g_, adj_[p], contrib);
  }

  bool want(const Node& nd, int i) const { return useful_[nd.parents[i]]; }

  // Reduce a contribution over broadcast leading dims when the parent is the
  // smaller operand.
  NodeId fit(NodeId contrib, const Shape& pshape) {
    return g_.shape(contrib) == pshape ? contrib : reduce_to(g_, contrib, pshape);
  }

  void backprop(NodeId id, const Node& nd, NodeId gid) {
    Graph& g = g_;
    switch (nd.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kAdd:
        if (want(nd, 0)) accum(nd.parents[0], fit(gid, g.shape(nd.parents[0])));
        if (want(nd, 1)) accum(nd.parents[1], fit(gid, g.shape(nd.parents[1])));
        break;
      case Op::kSub:
        if (want(nd, 0)) accum(nd.parents[0], fit(gid, g.shape(nd.parents[0])));
        if (want(nd, 1)) accum(nd.parents[1], fit(neg(g, gid), g.shape(nd.parents[1])));
        break;
      case Op::kMul:
        if (want(nd, 0)) accum(nd.parents[0], fit(mul(g, gid, nd.parents[1]), g.shape(nd.parents[0])));
        if (want(nd, 1)) accum(nd.parents[1], fit(mul(g, gid, nd.parents[0]), g.shape(nd.parents[1])));
        break;
      case Op::kMaskMul:
        if (want(nd, 0)) accum(nd.parents[0], mask_mul(g, gid, nd.parents[1]));
        break;
      case Op::kMatMul:
        if (want(nd, 0)) accum(nd.parents[0], matmul(g, gid, transpose(g, nd.parents[1])));
        if (want(nd, 1)) accum(nd.parents[1], matmul(g, transpose(g, nd.parents[0]), gid));
        break;
      case Op::kNeg:
        if (want(nd, 0)) accum(nd.parents[0], neg(g, gid));
        break;
      case Op::kAffine:
        if (want(nd, 0)) accum(nd.parents[0], affine(g, gid, nd.a, 0.0));
        break;
      case Op::kRelu:
        if (want(nd, 0)) accum(nd.parents[0], mask_mul(g, gid, relu_mask(g, nd)));
        break;
      case Op::kTanh:
        if (want(nd, 0)) accum(nd.parents[0], mul(g, gid, affine(g, square(g, id), -1.0, 1.0)));
        break;
      case Op::kExp:
        if (want(nd, 0)) accum(nd.parents[0], mul(g, gid, id));
        break;
      case Op::kLog:
        if (want(nd, 0)) accum(nd.parents[0], mul(g, gid, recip(g, nd.parents[0])));
        break;
      case Op::kSin:
        if (want(nd, 0)) accum(nd.parents[0], mul(g, gid, cos_op(g, nd.parents[0])));
        break;
      case Op::kCos:
        if (want(nd, 0)) accum(nd.parents[0], neg(g, mul(g, gid, sin_op(g, nd.parents[0]))));
        break;
      case Op::kSquare:
        if (want(nd, 0)) accum(nd.parents[0], mul(g, gid, affine(g, nd.parents[0], 2.0, 0.0)));
        break;
      case Op::kRecip:
        if (want(nd, 0)) accum(nd.parents[0], neg(g, mul(g, gid, square(g, id))));
        break;
      case Op::kSum:
        if (want(nd, 0)) accum(nd.parents[0], broadcast_to(g, gid, g.shape(nd.parents[0])));
        break;
      case Op::kMean:
        if (want(nd, 0)) {
          const Shape& ps = g.shape(nd.parents[0]);
          accum(nd.parents[0],
                affine(g, broadcast_to(g, gid, ps), 1.0 / static_cast<double>(ps.numel()), 0.0));
        }
        break;
      case Op::kSumAxis:
        if (want(nd, 0))
          accum(nd.parents[0], expand_axis(g, gid, nd.axis, g.shape(nd.parents[0])[nd.axis]));
        break;
      case Op::kMaxAxis:
        if (want(nd, 0)) {
          NodeId mask = argmax_mask(g, nd);
          accum(nd.parents[0],
                mask_mul(g, expand_axis(g, gid, nd.axis, g.shape(nd.parents[0])[nd.axis]), mask));
        }
        break;
      case Op::kExpandAxis:
        if (want(nd, 0)) accum(nd.parents[0], sum_axis(g, gid, nd.axis));
        break;
      case Op::kBroadcastTo:
        if (want(nd, 0)) accum(nd.parents[0], reduce_to(g, gid, g.shape(nd.parents[0])));
        break;
      case Op::kReduceTo:
        if (want(nd, 0)) accum(nd.parents[0], broadcast_to(g, gid, g.shape(nd.parents[0])));
        break;
      case Op::kSoftmaxLast:
        if (want(nd, 0)) {
          const int last = nd.shape.rank() - 1;
          NodeId gy = mul(g, gid, id);
          NodeId srow = expand_axis(g, sum_axis(g, gy, last), last, nd.shape.last());
          accum(nd.parents[0], mul(g, id, sub(g, gid, srow)));
        }
        break;
      case Op::kLogSoftmaxLast:
        if (want(nd, 0)) {
          const int last = nd.shape.rank() - 1;
          NodeId p = softmax_last(g, nd.parents[0]);
          NodeId srow = expand_axis(g, sum_axis(g, gid, last), last, nd.shape.last());
          accum(nd.parents[0], sub(g, gid, mul(g, p, srow)));
        }
        break;
      case Op::kConcat: {
        int64_t off = 0;
        for (int i = 0; i < nd.num_parents; ++i) {
          const int64_t len = g.shape(nd.parents[i])[nd.axis];
          if (want(nd, i)) accum(nd.parents[i], slice(g, gid, nd.axis, off, len));
          off += len;
        }
        break;
      }
      case Op::kSlice:
        if (want(nd, 0)) {
          const int64_t total = g.shape(nd.parents[0])[nd.axis];
          accum(nd.parents[0], pad_axis(g, gid, nd.axis, nd.i0, total - nd.i0 - nd.i1));
        }
        break;
      case Op::kPad:
        if (want(nd, 0))
          accum(nd.parents[0], slice(g, gid, nd.axis, nd.i0, g.shape(nd.parents[0])[nd.axis]));
        break;
      case Op::kTranspose:
        if (want(nd, 0)) accum(nd.parents[0], transpose(g, gid));
        break;
    }
  }

  Graph& g_;
  const std::vector<char>& useful_;
  std::vector<NodeId> adj_;
};

// ---------------------------------------------------------------------------
// Value mode: adjoints are raw buffers; mirrors the node-mode expressions
// operation for operation so results match bit for bit.
// ---------------------------------------------------------------------------

class ValueBackward {
 public:
  ValueBackward(Graph& g, int32_t upto, const std::vector<char>& useful)
      : g_(g), useful_(useful), adj_(upto), has_(upto, 0) {}

  void seed(NodeId out) {
    adj_[out] = {1.0};
    has_[out] = 1;
  }

  void run(NodeId out) {
    for (NodeId id = out; id >= 0; --id) {
      if (!has_[id]) continue;
      backprop(g_.node(id), adj_[id]);
    }
  }

  bool has(NodeId id) const { return has_[id] != 0; }
  const std::vector<double>& adjoint(NodeId id) const { return adj_[id]; }

 private:
  // scratch = contribution, then first-arrival copy or elementwise add; this
  // is the same accumulation the node mode performs.
  void accum(NodeId p, const std::vector<double>& contrib) {
    if (!has_[p]) {
      adj_[p] = contrib;
      has_[p] = 1;
    } else {
      double* a = adj_[p].data();
      const double* c = contrib.data();
      const size_t n = contrib.size();
      for (size_t i = 0; i < n; ++i) a[i] += c[i];
    }
  }

  bool want(const Node& nd, int i) const { return useful_[nd.parents[i]]; }

  // Sum `src` (shape of `nd`) over broadcast leading dims down to pshape.
  void fit_accum(NodeId p, std::vector<double>& src, const Shape& src_shape) {
    const Shape ps = g_.shape(p);
    if (ps == src_shape) {
      accum(p, src);
      return;
    }
    const int64_t m = ps.numel();
    const int64_t n = src_shape.numel();
    sc2_.assign(m, 0.0);
    for (int64_t i = 0; i < n; ++i) sc2_[i % m] += src[i];
    accum(p, sc2_);
  }

  void backprop(const Node& nd, const std::vector<double>& gv) {
    const int64_t n = nd.shape.numel();
    const double* gp = gv.data();
    switch (nd.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kAdd:
        if (want(nd, 0)) {
          sc0_.assign(gp, gp + n);
          fit_accum(nd.parents[0], sc0_, nd.shape);
        }
        if (want(nd, 1)) {
          sc0_.assign(gp, gp + n);
          fit_accum(nd.parents[1], sc0_, nd.shape);
        }
        break;
      case Op::kSub:
        if (want(nd, 0)) {
          sc0_.assign(gp, gp + n);
          fit_accum(nd.parents[0], sc0_, nd.shape);
        }
        if (want(nd, 1)) {
          sc0_.resize(n);
          for (int64_t i = 0; i < n; ++i) sc0_[i] = -gp[i];
          fit_accum(nd.parents[1], sc0_, nd.shape);
        }
        break;
      case Op::kMul:
        for (int side = 0; side < 2; ++side) {
          if (!want(nd, side)) continue;
          const Node& other = g_.node(nd.parents[1 - side]);
          const double* ov = other.value;
          const int64_t m = other.shape.numel();
          sc0_.resize(n);
          if (m == n)
            for (int64_t i = 0; i < n; ++i) sc0_[i] = gp[i] * ov[i];
          else
            for (int64_t i = 0; i < n; ++i) sc0_[i] = gp[i] * ov[i % m];
          fit_accum(nd.parents[side], sc0_, nd.shape);
        }
        break;
      case Op::kMaskMul:
        if (want(nd, 0)) {
          const Node& mk = g_.node(nd.parents[1]);
          const double* mv = mk.value;
          const int64_t m = mk.shape.numel();
          sc0_.resize(n);
          if (m == n)
            for (int64_t i = 0; i < n; ++i) sc0_[i] = gp[i] * mv[i];
          else
            for (int64_t i = 0; i < n; ++i) sc0_[i] = gp[i] * mv[i % m];
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kMatMul: {
        const Node& pa = g_.node(nd.parents[0]);
        const Node& pb = g_.node(nd.parents[1]);
        const int64_t m = pa.shape[0], k = pa.shape[1], c = pb.shape[1];
        if (want(nd, 0)) {
          // transpose(B) then matmul, matching the node-mode expression
          sc1_.resize(k * c);
          for (int64_t i = 0; i < k; ++i)
            for (int64_t j = 0; j < c; ++j) sc1_[j * k + i] = pb.value[i * c + j];
          sc0_.resize(m * k);
          kernels::matmul(gp, sc1_.data(), sc0_.data(), m, c, k);
          accum(nd.parents[0], sc0_);
        }
        if (want(nd, 1)) {
          sc1_.resize(m * k);
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < k; ++j) sc1_[j * m + i] = pa.value[i * k + j];
          sc0_.resize(k * c);
          kernels::matmul(sc1_.data(), gp, sc0_.data(), k, m, c);
          accum(nd.parents[1], sc0_);
        }
        break;
      }
      case Op::kNeg:
        if (want(nd, 0)) {
          sc0_.resize(n);
          for (int64_t i = 0; i < n; ++i) sc0_[i] = -gp[i];
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kAffine:
        if (want(nd, 0)) {
          sc0_.resize(n);
          for (int64_t i = 0; i < n; ++i) sc0_[i] = nd.a * gp[i] + 0.0;
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kRelu:
        if (want(nd, 0)) {
          const double* x = g_.node(nd.parents[0]).value;
          sc0_.resize(n);
          for (int64_t i = 0; i < n; ++i) sc0_[i] = gp[i] * (x[i] > 0 ? 1.0 : 0.0);
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kTanh:
        if (want(nd, 0)) {
          const double* y = nd.value;
          sc0_.resize(n);
          for (int64_t i = 0; i < n; ++i) sc0_[i] = gp[i] * (-1.0 * (y[i] * y[i]) + 1.0);
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kExp:
        if (want(nd, 0)) {
          const double* y = nd.value;
          sc0_.resize(n);
          for (int64_t i = 0; i < n; ++i) sc0_[i] = gp[i] * y[i];
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kLog:
        if (want(nd, 0)) {
          const double* x = g_.node(nd.parents[0]).value;
          sc0_.resize(n);
          for (int64_t i = 0; i < n; ++i) sc0_[i] = gp[i] * (1.0 / x[i]);
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kSin:
        if (want(nd, 0)) {
          const double* x = g_.node(nd.parents[0]).value;
          sc0_.resize(n);
          for (int64_t i = 0; i < n; ++i) sc0_[i] = gp[i] * std::cos(x[i]);
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kCos:
        if (want(nd, 0)) {
          const double* x = g_.node(nd.parents[0]).value;
          sc0_.resize(n);
          for (int64_t i = 0; i < n; ++i) sc0_[i] = -(gp[i] * std::sin(x[i]));
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kSquare:
        if (want(nd, 0)) {
          const double* x = g_.node(nd.parents[0]).value;
          sc0_.resize(n);
          for (int64_t i = 0; i < n; ++i) sc0_[i] = gp[i] * (2.0 * x[i] + 0.0);
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kRecip:
        if (want(nd, 0)) {
          const double* y = nd.value;
          sc0_.resize(n);
          for (int64_t i = 0; i < n; ++i) sc0_[i] = -(gp[i] * (y[i] * y[i]));
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kSum:
        if (want(nd, 0)) {
          const int64_t pn = g_.shape(nd.parents[0]).numel();
          sc0_.assign(pn, gp[0]);
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kMean:
        if (want(nd, 0)) {
          const int64_t pn = g_.shape(nd.parents[0]).numel();
          const double inv = 1.0 / static_cast<double>(pn);
          sc0_.assign(pn, inv * gp[0] + 0.0);
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kSumAxis:
        if (want(nd, 0)) {
          const Shape ps = g_.shape(nd.parents[0]);
          expand_vals(gp, ps, nd.axis, sc0_);
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kMaxAxis:
        if (want(nd, 0)) {
          const Node& p = g_.node(nd.parents[0]);
          expand_vals(gp, p.shape, nd.axis, sc0_);
          int64_t outer = 1, an = p.shape[nd.axis], inner = 1;
          for (int i = 0; i < nd.axis; ++i) outer *= p.shape[i];
          for (int i = nd.axis + 1; i < p.shape.rank(); ++i) inner *= p.shape[i];
          const double* x = p.value;
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) {
              int64_t best = 0;
              double bv = x[o * an * inner + i];
              for (int64_t k = 1; k < an; ++k) {
                const double v = x[(o * an + k) * inner + i];
                if (v > bv) {
                  bv = v;
                  best = k;
                }
              }
              for (int64_t k = 0; k < an; ++k) {
                const int64_t idx = (o * an + k) * inner + i;
                sc0_[idx] = sc0_[idx] * (k == best ? 1.0 : 0.0);
              }
            }
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kExpandAxis:
        if (want(nd, 0)) {
          int64_t outer = 1, an = nd.shape[nd.axis], inner = 1;
          for (int i = 0; i < nd.axis; ++i) outer *= nd.shape[i];
          for (int i = nd.axis + 1; i < nd.shape.rank(); ++i) inner *= nd.shape[i];
          sc0_.resize(outer * inner);
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) {
              double acc = 0;
              for (int64_t k = 0; k < an; ++k) acc += gp[(o * an + k) * inner + i];
              sc0_[o * inner + i] = acc;
            }
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kBroadcastTo:
        if (want(nd, 0)) {
          const Shape ps = g_.shape(nd.parents[0]);
          const int64_t m = ps.numel();
          sc0_.assign(m, 0.0);
          for (int64_t i = 0; i < n; ++i) sc0_[i % m] += gp[i];
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kReduceTo:
        if (want(nd, 0)) {
          const Shape ps = g_.shape(nd.parents[0]);
          const int64_t pn = ps.numel();
          sc0_.resize(pn);
          for (int64_t i = 0; i < pn; i += n) std::memcpy(sc0_.data() + i, gp, n * sizeof(double));
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kSoftmaxLast:
        if (want(nd, 0)) {
          const int64_t cols = nd.shape.last();
          const int64_t rows = n / cols;
          const double* y = nd.value;
          sc0_.resize(n);
          for (int64_t r = 0; r < rows; ++r) {
            double s = 0;
            for (int64_t c = 0; c < cols; ++c) s += gp[r * cols + c] * y[r * cols + c];
            for (int64_t c = 0; c < cols; ++c) {
              const int64_t i = r * cols + c;
              sc0_[i] = y[i] * (gp[i] - s);
            }
          }
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kLogSoftmaxLast:
        if (want(nd, 0)) {
          const int64_t cols = nd.shape.last();
          const int64_t rows = n / cols;
          sc1_.resize(n);
          kernels::softmax_rows(g_.node(nd.parents[0]).value, sc1_.data(), rows, cols);
          sc0_.resize(n);
          for (int64_t r = 0; r < rows; ++r) {
            double s = 0;
            for (int64_t c = 0; c < cols; ++c) s += gp[r * cols + c];
            for (int64_t c = 0; c < cols; ++c) {
              const int64_t i = r * cols + c;
              sc0_[i] = gp[i] - sc1_[i] * s;
            }
          }
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kConcat: {
        int64_t outer = 1, an = nd.shape[nd.axis], inner = 1;
        for (int i = 0; i < nd.axis; ++i) outer *= nd.shape[i];
        for (int i = nd.axis + 1; i < nd.shape.rank(); ++i) inner *= nd.shape[i];
        int64_t off = 0;
        for (int i = 0; i < nd.num_parents; ++i) {
          const int64_t len = g_.shape(nd.parents[i])[nd.axis];
          if (want(nd, i)) {
            sc0_.resize(outer * len * inner);
            for (int64_t o = 0; o < outer; ++o)
              std::memcpy(sc0_.data() + o * len * inner, gp + (o * an + off) * inner,
                          len * inner * sizeof(double));
            accum(nd.parents[i], sc0_);
          }
          off += len;
        }
        break;
      }
      case Op::kSlice:
        if (want(nd, 0)) {
          const Shape ps = g_.shape(nd.parents[0]);
          int64_t outer = 1, pn = ps[nd.axis], inner = 1;
          for (int i = 0; i < nd.axis; ++i) outer *= ps[i];
          for (int i = nd.axis + 1; i < ps.rank(); ++i) inner *= ps[i];
          sc0_.assign(ps.numel(), 0.0);
          for (int64_t o = 0; o < outer; ++o)
            std::memcpy(sc0_.data() + (o * pn + nd.i0) * inner, gp + o * nd.i1 * inner,
                        nd.i1 * inner * sizeof(double));
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kPad:
        if (want(nd, 0)) {
          const Shape ps = g_.shape(nd.parents[0]);
          int64_t outer = 1, pn = ps[nd.axis], inner = 1;
          for (int i = 0; i < nd.axis; ++i) outer *= ps[i];
          for (int i = nd.axis + 1; i < ps.rank(); ++i) inner *= ps[i];
          const int64_t an = nd.shape[nd.axis];
          sc0_.resize(ps.numel());
          for (int64_t o = 0; o < outer; ++o)
            std::memcpy(sc0_.data() + o * pn * inner, gp + (o * an + nd.i0) * inner,
                        pn * inner * sizeof(double));
          accum(nd.parents[0], sc0_);
        }
        break;
      case Op::kTranspose:
        if (want(nd, 0)) {
          const int64_t r = nd.shape[0], c = nd.shape[1];
          sc0_.resize(n);
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) sc0_[j * r + i] = gp[i * c + j];
          accum(nd.parents[0], sc0_);
        }
        break;
    }
  }

  static void expand_vals(const double* src, const Shape& target, int axis,
                          std::vector<double>& dst) {
    int64_t outer = 1, an = target[axis], inner = 1;
    for (int i = 0; i < axis; ++i) outer *= target[i];
    for (int i = axis + 1; i < target.rank(); ++i) inner *= target[i];
    dst.resize(target.numel());
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t k = 0; k < an; ++k)
        std::memcpy(dst.data() + (o * an + k) * inner, src + o * inner, inner * sizeof(double));
  }

  Graph& g_;
  const std::vector<char>& useful_;
  std::vector<std::vector<double>> adj_;
  std::vector<char> has_;
  std::vector<double> sc0_, sc1_, sc2_;
};

}  // namespace

std::vector<NodeId> grad(Graph& g, NodeId output, std::span<const NodeId> wrt, bool create_graph) {
  if (output < 0 || output >= g.size()) throw ShapeError("grad: output not in graph");
  if (g.shape(output).rank() != 0)
    throw ShapeError("grad: output must be scalar, got " + g.shape(output).str());

  // Nodes appended after the output (including ones this call emits) can
  // only ever receive zero adjoints.
  const int32_t upto = g.size();
  std::vector<char> useful = useful_set(g, upto, wrt);

  std::vector<NodeId> out;
  out.reserve(wrt.size());
  if (create_graph) {
    NodeBackward bw(g, upto, useful);
    if (useful[output]) bw.seed(output);
    bw.run(output);
    for (NodeId w : wrt) {
      NodeId a = bw.adjoint(w);
      out.push_back(a == kNoNode ? g.zeros(g.shape(w)) : a);
    }
  } else {
    ValueBackward bw(g, upto, useful);
    if (useful[output]) bw.seed(output);
    bw.run(output);
    for (NodeId w : wrt) {
      if (bw.has(w))
        out.push_back(g.constant(g.shape(w), bw.adjoint(w)));
      else
        out.push_back(g.zeros(g.shape(w)));
    }
  }
  return out;
}

}  // namespace simt::ad
