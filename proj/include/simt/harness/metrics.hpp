#pragma once

#include <fstream>
#include <string>

namespace simt::harness {

struct MetricsRow {
  int64_t step = 0;
  std::string split;  // train | val | test
  double task_loss = 0;
  double kd_loss = 0;
  double total_loss = 0;
  double accuracy_or_return = 0;
  int64_t wall_ms = 0;
  std::string eval_network;  // theta | momentum
};

// CSV with columns exactly in MetricsRow field order; doubles use %.17g so
// files round-trip and compare byte for byte.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void append(const MetricsRow& row);

 private:
  std::ofstream out_;
};

std::string format_double(double v);

}  // namespace simt::harness
