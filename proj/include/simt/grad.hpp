#pragma once

#include <span>
#include <vector>

#include "simt/graph.hpp"

namespace simt::ad {

// Reverse-mode gradient of a scalar `output` with respect to `wrt` nodes.
//
// With create_graph the adjoints are emitted as ordinary nodes on the same
// tape and can be differentiated again (second-order). Without it the
// backward pass runs on raw values and the results are returned as constant
// nodes, cutting any further gradient flow. Both modes run the same kernel
// arithmetic in the same order, so their numeric results are identical.
//
// A wrt node unreachable from output yields an all-zero buffer of its shape.
std::vector<NodeId> grad(Graph& g, NodeId output, std::span<const NodeId> wrt, bool create_graph);

}  // namespace simt::ad
