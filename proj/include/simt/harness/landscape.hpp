#pragma once

#include <functional>

#include "simt/param.hpp"
#include "simt/rng.hpp"

namespace simt::harness {

// Random direction with each weight-matrix row rescaled to the norm of the
// corresponding row of `center`; rank-0/1 entries (biases) are treated as a
// single filter.
ad::ParamSet filter_normalized_direction(const ad::ParamSet& center, Rng& rng);

struct LandscapeGrid {
  double half_width = 1.0;
  std::vector<double> coeff;  // res axis values, center exactly 0
  std::vector<double> loss;   // res * res, row-major over (i, j)
};

// Evaluates loss(center + ci*d1 + cj*d2) over an odd res x res grid of
// coefficients in [-half_width, half_width].
LandscapeGrid landscape_scan(const ad::ParamSet& center,
                             const std::function<double(const ad::ParamSet&)>& loss,
                             uint64_t direction_seed, double half_width, int res);

}  // namespace simt::harness
