#include "simt/harness/landscape.hpp"

#include <cmath>

#include "simt/errors.hpp"

namespace simt::harness {

ad::ParamSet filter_normalized_direction(const ad::ParamSet& center, Rng& rng) {
  ad::ParamSet dir;
  for (const auto& e : center) {
    std::vector<double> d(e.data.size());
    for (auto& v : d) v = rng.normal();
    if (e.shape.rank() == 2) {
      const int64_t rows = e.shape[0], cols = e.shape[1];
      for (int64_t r = 0; r < rows; ++r) {
        double dn = 0, tn = 0;
        for (int64_t c = 0; c < cols; ++c) {
          dn += d[r * cols + c] * d[r * cols + c];
          tn += e.data[r * cols + c] * e.data[r * cols + c];
        }
        const double s = dn > 0 ? std::sqrt(tn / dn) : 0.0;
        for (int64_t c = 0; c < cols; ++c) d[r * cols + c] *= s;
      }
    } else {
      double dn = 0, tn = 0;
      for (size_t i = 0; i < d.size(); ++i) {
        dn += d[i] * d[i];
        tn += e.data[i] * e.data[i];
      }
      const double s = dn > 0 ? std::sqrt(tn / dn) : 0.0;
      for (auto& v : d) v *= s;
    }
    dir.add(e.name, e.shape, std::move(d));
  }
  return dir;
}

LandscapeGrid landscape_scan(const ad::ParamSet& center,
                             const std::function<double(const ad::ParamSet&)>& loss,
                             uint64_t direction_seed, double half_width, int res) {
  if (res < 1 || res % 2 == 0) throw Error("landscape_scan: resolution must be odd");
  if (half_width <= 0) throw Error("landscape_scan: half-width must be > 0");

  Rng rng(direction_seed);
  ad::ParamSet d1 = filter_normalized_direction(center, rng);
  ad::ParamSet d2 = filter_normalized_direction(center, rng);

  LandscapeGrid grid;
  grid.half_width = half_width;
  grid.coeff.resize(res);
  for (int k = 0; k < res; ++k)
    grid.coeff[k] = res == 1 ? 0.0
                             : -half_width + 2.0 * half_width * static_cast<double>(k) /
                                                 static_cast<double>(res - 1);
  grid.loss.resize(static_cast<size_t>(res) * res);

  ad::ParamSet point = center;
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      const double ci = grid.coeff[i], cj = grid.coeff[j];
      for (size_t e = 0; e < center.size(); ++e) {
        const auto& c = center.entry(e).data;
        const auto& a = d1.entry(e).data;
        const auto& b = d2.entry(e).data;
        auto& p = point.entry(e).data;
        for (size_t k = 0; k < p.size(); ++k) p[k] = c[k] + ci * a[k] + cj * b[k];
      }
      grid.loss[static_cast<size_t>(i) * res + j] = loss(point);
    }
  }
  return grid;
}

}  // namespace simt::harness
