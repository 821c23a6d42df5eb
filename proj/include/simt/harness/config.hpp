#pragma once

#include <optional>
#include <string>

#include "simt/engine.hpp"
#include "simt/rl/train.hpp"

namespace simt::harness {

struct ScheduleConfig {
  int64_t iterations = 2000;
  int64_t task_batch = 4;
  int64_t eval_every = 100;
  int64_t eval_tasks = 100;
  int64_t test_tasks = 200;
};

struct TaskConfig {
  std::string family = "sinusoid";  // sinusoid | angle | clusters | flat-file
  int64_t n_way = 5, k_shot = 5, q_query = 15;
  tasks::SinusoidFamily sinusoid;
  tasks::AngleFamily angle;
  // cluster table generation
  int64_t num_latent_classes = 16;
  double spread = 0.25;
  double center_dist = 2.0;
  int64_t examples_per_class = 50;
  std::string path;  // flat-file
};

struct ExperimentConfig {
  std::string mode = "few-shot";  // few-shot | rl
  uint64_t seed = 0;
  std::string output_dir = "runs/out";
  std::string algorithm = "maml";

  nn::MlpConfig model;
  meta::AdaptConfig adapt;
  std::optional<engine::SimtConfig> simt;
  engine::AdamConfig adam;
  TaskConfig task;
  ScheduleConfig schedule;
  rl::RlConfig rl;

  // theta | momentum; empty = momentum when simt is active, theta otherwise
  std::string eval_network;
  // wall_ms is written as 0 unless timing is enabled, keeping metrics files
  // byte-reproducible across runs
  bool timing = false;

  std::string resolved_eval_network() const {
    if (!eval_network.empty()) return eval_network;
    return simt ? "momentum" : "theta";
  }
};

// Parses and validates a config file; throws ConfigError listing every
// violation. Defaults (per-algorithm lambda/p/eta/temperature, step sizes,
// learning rates) are filled before explicit keys override them.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

}  // namespace simt::harness
