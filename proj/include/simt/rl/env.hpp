#pragma once

#include <array>

#include "simt/errors.hpp"

namespace simt::rl {

// 2D navigation: a point agent starts at the origin and moves toward a goal.
// Actions are clipped per coordinate to [-0.1, 0.1]; reward is the negative
// squared distance to the goal after the move; the episode ends within 0.01
// of the goal or at the horizon.
class NavEnv {
 public:
  static constexpr double kActionClip = 0.1;
  static constexpr double kGoalRadius = 0.01;

  NavEnv(std::array<double, 2> goal, int horizon) : goal_(goal), horizon_(horizon) { reset(); }

  void reset() {
    pos_ = {0.0, 0.0};
    t_ = 0;
    done_ = false;
  }

  // Applies the (clipped) action; returns the reward. Stepping a finished
  // episode is an error.
  double step(const double* action) {
    if (done_) throw Error("NavEnv: step after episode end");
    for (int d = 0; d < 2; ++d) {
      double a = action[d];
      if (a > kActionClip) a = kActionClip;
      if (a < -kActionClip) a = -kActionClip;
      pos_[d] += a;
    }
    ++t_;
    const double dx = pos_[0] - goal_[0], dy = pos_[1] - goal_[1];
    const double d2 = dx * dx + dy * dy;
    done_ = d2 < kGoalRadius * kGoalRadius || t_ >= horizon_;
    return -d2;
  }

  const std::array<double, 2>& position() const { return pos_; }
  const std::array<double, 2>& goal() const { return goal_; }
  bool done() const { return done_; }
  bool at_goal() const {
    const double dx = pos_[0] - goal_[0], dy = pos_[1] - goal_[1];
    return dx * dx + dy * dy < kGoalRadius * kGoalRadius;
  }
  int t() const { return t_; }

 private:
  std::array<double, 2> goal_;
  int horizon_;
  std::array<double, 2> pos_{};
  int t_ = 0;
  bool done_ = false;
};

}  // namespace simt::rl
