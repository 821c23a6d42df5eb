#pragma once

#include "simt/harness/checkpoint.hpp"
#include "simt/harness/config.hpp"

namespace simt::harness {

struct EvalSummary {
  double mean_loss = 0, std_loss = 0, ci95_loss = 0;
  double mean_acc = 0, std_acc = 0, ci95_acc = 0;
  double conf_query = 0, conf_support = 0;
  int64_t n = 0;
  std::string network;
};

// Builds the task family described by the config; resolves the model input
// dimension for file-backed families.
tasks::Family build_family(ExperimentConfig& cfg);

// Trains per the config, writing metrics.csv, checkpoints, and summary.json
// under output_dir. With resume_path the run continues from the saved step.
void run_experiment(ExperimentConfig cfg, const std::string& resume_path = "");

// Post-adaptation statistics of a saved network over fresh tasks.
EvalSummary evaluate_checkpoint(ExperimentConfig cfg, const std::string& ckpt_path,
                                const std::string& network, int64_t n_tasks, uint64_t eval_seed);

// Loss-landscape scan around a saved network; writes `i, j, loss` rows.
void landscape_to_csv(ExperimentConfig cfg, const std::string& ckpt_path,
                      const std::string& network, double half_width, int res, int64_t n_tasks,
                      const std::string& out_path);

}  // namespace simt::harness
