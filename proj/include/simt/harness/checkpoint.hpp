#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "simt/param.hpp"

namespace simt::harness {

// Little-endian binary container: magic `SIMTCKPT`, u32 version, u32 section
// count, then length-prefixed named sections (name, shape, raw f64 data),
// and a trailing CRC32 over everything before it.
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  int64_t step = 0;
  ad::ParamSet theta;
  ad::ParamSet theta_moment;
  ad::ParamSet adam_m, adam_v;
  int64_t adam_t = 0;
  ad::ParamSet metasgd_alpha, alpha_m, alpha_v;
  int64_t alpha_t = 0;
  std::array<uint64_t, 4> episode_rng{};
  bool has_best = false;
  int64_t best_step = 0;
  double best_metric = 0;
  // RL runs keep best-so-far parameter snapshots instead of a best file
  ad::ParamSet best_theta, best_moment;
  double best_return = 0;
};

void checkpoint_save(const Checkpoint& ckpt, const std::string& path);
Checkpoint checkpoint_load(const std::string& path);

uint32_t crc32(const void* data, size_t len);

}  // namespace simt::harness
