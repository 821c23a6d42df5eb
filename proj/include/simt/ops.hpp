#pragma once

#include "simt/graph.hpp"

namespace simt::ad {

// Elementwise binary ops accept equal shapes, or one operand whose shape
// equals the trailing dims of the other (broadcast over leading dims only).
NodeId add(Graph& g, NodeId a, NodeId b);
NodeId sub(Graph& g, NodeId a, NodeId b);
NodeId mul(Graph& g, NodeId a, NodeId b);

// Multiply by a constant mask node; gradient flows only into `x`.
NodeId mask_mul(Graph& g, NodeId x, NodeId mask);

NodeId matmul(Graph& g, NodeId a, NodeId b);
NodeId transpose(Graph& g, NodeId a);

NodeId neg(Graph& g, NodeId x);
NodeId scale(Graph& g, NodeId x, double c);
NodeId affine(Graph& g, NodeId x, double mul, double add);

NodeId relu(Graph& g, NodeId x);
NodeId tanh_op(Graph& g, NodeId x);
NodeId exp_op(Graph& g, NodeId x);
NodeId log_op(Graph& g, NodeId x);
NodeId sin_op(Graph& g, NodeId x);
NodeId cos_op(Graph& g, NodeId x);
NodeId square(Graph& g, NodeId x);
NodeId recip(Graph& g, NodeId x);

NodeId sum(Graph& g, NodeId x);   // all elements -> scalar
NodeId mean(Graph& g, NodeId x);  // all elements -> scalar
NodeId sum_axis(Graph& g, NodeId x, int axis);
NodeId max_axis(Graph& g, NodeId x, int axis);
NodeId expand_axis(Graph& g, NodeId x, int axis, int64_t n);
NodeId broadcast_to(Graph& g, NodeId x, const Shape& target);
NodeId reduce_to(Graph& g, NodeId x, const Shape& target);

NodeId softmax_last(Graph& g, NodeId x);
NodeId log_softmax_last(Graph& g, NodeId x);

NodeId concat(Graph& g, std::span<const NodeId> parts, int axis);
NodeId slice(Graph& g, NodeId x, int axis, int64_t start, int64_t len);
NodeId pad_axis(Graph& g, NodeId x, int axis, int64_t before, int64_t after);

// Low-level kernels shared by eager evaluation and the value-mode backward
// pass, so both gradient modes run bit-identical arithmetic.
namespace kernels {
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// c = a * b^T and c = a^T * b, used by matmul backward.
void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols);
void log_softmax_rows(const double* x, double* y, int64_t rows, int64_t cols);
}  // namespace kernels

}  // namespace simt::ad
