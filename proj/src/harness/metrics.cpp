#include "simt/harness/metrics.hpp"

#include <cstdio>

#include "simt/errors.hpp"

namespace simt::harness {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

MetricsWriter::MetricsWriter(const std::string& path) : out_(path, std::ios::trunc) {
  if (!out_) throw IoError("metrics: cannot open " + path);
  out_ << "step,split,task_loss,kd_loss,total_loss,accuracy_or_return,wall_ms,eval_network\n";
}

void MetricsWriter::append(const MetricsRow& row) {
  out_ << row.step << ',' << row.split << ',' << format_double(row.task_loss) << ','
       << format_double(row.kd_loss) << ',' << format_double(row.total_loss) << ','
       << format_double(row.accuracy_or_return) << ',' << row.wall_ms << ','
       << row.eval_network << '\n';
  out_.flush();
  if (!out_) throw IoError("metrics: write failed");
}

}  // namespace simt::harness
