#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "simt/ops.hpp"
#include "simt/rng.hpp"

namespace simt::tasks {

enum class TaskKind { kRegressionMse, kRegressionAngular, kClassification };

// One task's support/query split. Inputs are row-major (n, input_dim);
// regression targets are (n, target_dim); classification labels are local
// (0..n_way-1) with class_map recording the latent class behind each local
// label. Row indices are kept for table-backed families so support/query
// disjointness can be checked.
struct Episode {
  TaskKind kind = TaskKind::kRegressionMse;
  int64_t input_dim = 1;
  int64_t target_dim = 1;
  int64_t n_way = 0;
  int64_t n_support = 0;
  int64_t n_query = 0;
  std::vector<double> xs, ys;
  std::vector<double> xq, yq;
  std::vector<int64_t> support_labels, query_labels;
  std::vector<int64_t> support_rows, query_rows;
  std::vector<int64_t> class_map;
};

// y = A sin(x + phase), A ~ U(amp), phase ~ U(phase), x ~ U(input range).
struct SinusoidFamily {
  double amp_lo = 0.1, amp_hi = 5.0;
  double phase_lo = 0.0, phase_hi = 3.14159265358979323846;
  double x_lo = -5.0, x_hi = 5.0;
  double noise_sigma = 0.0;
};

// A fixed 2-D template direction rotated by a per-task latent orientation and
// embedded into feature_dim dims; the target is the example's rotation
// relative to the task orientation, in [0, 2pi).
struct AngleFamily {
  int64_t feature_dim = 8;
  uint64_t gen_seed = 0;
  double noise_sigma = 0.0;
};

// Finite table of examples grouped by class; the synthetic cluster family
// materializes into one of these, and the flat-file loader produces the same
// type, so both sample episodes identically.
struct ClassTable {
  int64_t num_classes = 0;
  int64_t feature_dim = 0;
  std::vector<int64_t> class_offsets;  // size num_classes+1 into rows
  std::vector<double> rows;            // (total_rows, feature_dim)

  int64_t rows_in_class(int64_t c) const { return class_offsets[c + 1] - class_offsets[c]; }
  int64_t total_rows() const { return class_offsets.empty() ? 0 : class_offsets.back(); }
};

// Gaussian blobs: class centers ~ N(0, center_dist^2 I), examples = center +
// N(0, spread^2 I), examples_per_class rows each.
ClassTable make_cluster_table(int64_t num_latent_classes, int64_t feature_dim, double spread,
                              double center_dist, int64_t examples_per_class, uint64_t seed);

using Family = std::variant<SinusoidFamily, AngleFamily, ClassTable>;

Episode sample_episode(const Family& family, int64_t n_way, int64_t k_shot, int64_t q_query,
                       Rng& rng);

// Mean over the batch of squared error; y length must equal pred numel.
ad::NodeId mse_loss(ad::Graph& g, ad::NodeId pred, std::span<const double> y);

// Mean over the batch of (cos pred - cos y)^2 + (sin pred - sin y)^2;
// 2pi-periodic in both arguments.
ad::NodeId angular_loss(ad::Graph& g, ad::NodeId pred, std::span<const double> y);

// Mean over the batch of -log softmax(logits)[label].
ad::NodeId ce_loss(ad::Graph& g, ad::NodeId logits, std::span<const int64_t> labels);

double accuracy(const ad::Graph& g, ad::NodeId logits, std::span<const int64_t> labels);

// Flat dataset file: header `SIMT-DS v1 <num_classes> <feature_dim>`, then
// one `<class_id> <f_0> ... <f_{d-1}>` line per example.
ClassTable load_flat_dataset(const std::string& path);
void dump_flat_dataset(const ClassTable& table, const std::string& path);

}  // namespace simt::tasks
