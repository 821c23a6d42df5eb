#include "simt/rl/baseline.hpp"

#include <cmath>

#include "simt/errors.hpp"

namespace simt::rl {

namespace {

int64_t feature_dim(int64_t state_dim) { return 2 * state_dim + 4; }

void features(const double* state, int64_t state_dim, int64_t t, double* out) {
  int64_t j = 0;
  for (int64_t d = 0; d < state_dim; ++d) out[j++] = state[d];
  for (int64_t d = 0; d < state_dim; ++d) out[j++] = state[d] * state[d];
  const double ts = 0.01 * static_cast<double>(t);
  out[j++] = ts;
  out[j++] = ts * ts;
  out[j++] = ts * ts * ts;
  out[j++] = 1.0;
}

// Cholesky solve of the (SPD) ridge normal equations.
std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j <= i; ++j) {
      double s = a[i * n + j];
      for (int64_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      if (i == j) {
        if (s <= 0) throw NumericError("baseline_fit: normal matrix not positive definite");
        a[i * n + i] = std::sqrt(s);
      } else {
        a[i * n + j] = s / a[j * n + j];
      }
    }
  }
  for (int64_t i = 0; i < n; ++i) {
    double s = b[i];
    for (int64_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
    b[i] = s / a[i * n + i];
  }
  for (int64_t i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int64_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
    b[i] = s / a[i * n + i];
  }
  return b;
}

}  // namespace

double LinearBaseline::predict(const double* state, int64_t t) const {
  std::vector<double> f(feature_dim(state_dim));
  features(state, state_dim, t, f.data());
  double v = 0;
  for (size_t i = 0; i < f.size(); ++i) v += weights[i] * f[i];
  return v;
}

LinearBaseline baseline_fit(std::span<const Trajectory> trajs, double gamma, double ridge) {
  if (trajs.empty()) throw Error("baseline_fit: no trajectories");
  const int64_t sdim = 2;
  const int64_t fd = feature_dim(sdim);
  std::vector<double> ata(fd * fd, 0.0), atb(fd, 0.0), f(fd);

  for (const auto& tr : trajs) {
    const int64_t len = tr.length();
    // discounted returns-to-go
    std::vector<double> ret(len);
    double acc = 0;
    for (int64_t t = len - 1; t >= 0; --t) {
      acc = tr.rewards[t] + gamma * acc;
      ret[t] = acc;
    }
    for (int64_t t = 0; t < len; ++t) {
      features(tr.states.data() + t * sdim, sdim, t, f.data());
      for (int64_t i = 0; i < fd; ++i) {
        atb[i] += f[i] * ret[t];
        for (int64_t j = 0; j <= i; ++j) ata[i * fd + j] += f[i] * f[j];
      }
    }
  }
  for (int64_t i = 0; i < fd; ++i) {
    ata[i * fd + i] += ridge;
    for (int64_t j = i + 1; j < fd; ++j) ata[i * fd + j] = ata[j * fd + i];
  }

  LinearBaseline b;
  b.state_dim = sdim;
  b.weights = solve_spd(std::move(ata), std::move(atb), fd);
  return b;
}

void fill_values(std::span<Trajectory> trajs, const LinearBaseline& baseline) {
  for (auto& tr : trajs) {
    const int64_t len = tr.length();
    tr.values.resize(len);
    for (int64_t t = 0; t < len; ++t)
      tr.values[t] = baseline.predict(tr.states.data() + t * 2, t);
  }
}

std::vector<double> gae_advantages(const Trajectory& traj, const GAEConfig& cfg) {
  const int64_t len = traj.length();
  if (static_cast<int64_t>(traj.values.size()) != len)
    throw Error("gae_advantages: baseline values not filled");
  std::vector<double> adv(len);
  double acc = 0;
  for (int64_t t = len - 1; t >= 0; --t) {
    const double next_v = (t + 1 < len) ? traj.values[t + 1] : 0.0;  // V = 0 past the end
    const double delta = traj.rewards[t] + cfg.gamma * next_v - traj.values[t];
    acc = delta + cfg.gamma * cfg.lam * acc;
    adv[t] = acc;
  }
  return adv;
}

std::vector<double> gae_advantages_flat(std::span<const Trajectory> trajs, const GAEConfig& cfg) {
  std::vector<double> out;
  for (const auto& tr : trajs) {
    auto a = gae_advantages(tr, cfg);
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

void standardize(std::span<double> xs) {
  if (xs.empty()) return;
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  const double inv = 1.0 / (std::sqrt(var) + 1e-8);
  for (double& x : xs) x = (x - mean) * inv;
}

}  // namespace simt::rl
