#pragma once

// Intrinsic-reward normalization by the running std of discounted intrinsic
// returns, reward combination, and per-episode MNIR for analysis.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "smlab/errors.hpp"

namespace smlab {

// Welford aggregates; population std.
class RunningStd {
 public:
  void push(double x) {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }

  std::uint64_t count() const { return count_; }
  double mean() const { return mean_; }
  double m2() const { return m2_; }
  double variance() const { return count_ == 0 ? 0.0 : std::max(0.0, m2_ / static_cast<double>(count_)); }
  double stddev() const { return std::sqrt(variance()); }

  void restore(std::uint64_t count, double mean, double m2) {
    count_ = count;
    mean_ = mean;
    m2_ = m2;
  }

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct RewardConfig {
  double beta = 1.0;
  double gamma_i = 0.99;
  double eps = 1e-8;
};

// Per-actor discounted intrinsic returns feeding one global RunningStd.
class RewardNormalizer {
 public:
  RewardNormalizer() = default;
  RewardNormalizer(const RewardConfig& cfg, std::size_t actors) : cfg_(cfg), returns_(actors, 0.0) {
    if (cfg.beta < 0) throw ConfigError("reward.beta must be >= 0");
    if (cfg.gamma_i < 0 || cfg.gamma_i > 1) throw ConfigError("reward.gamma_i must lie in [0, 1]");
    if (cfg.eps <= 0) throw ConfigError("reward.eps must be positive");
  }

  const RewardConfig& config() const { return cfg_; }
  const RunningStd& running_std() const { return std_; }
  RunningStd& running_std() { return std_; }
  double r_std() const { return std_.stddev(); }
  std::span<const double> returns() const { return returns_; }
  std::vector<double>& mutable_returns() { return returns_; }

  // R <- gamma_i R + r_i, push R, then r_i / max(std, eps). R resets after a
  // terminal step so the next episode starts from zero.
  double normalize(double r_i, std::size_t actor, bool episode_done) {
    if (actor >= returns_.size()) throw UsageError("reward: actor index out of range");
    double& ret = returns_[actor];
    ret = cfg_.gamma_i * ret + r_i;
    std_.push(ret);
    if (episode_done) ret = 0.0;
    return r_i / std::max(std_.stddev(), cfg_.eps);
  }

 private:
  RewardConfig cfg_;
  std::vector<double> returns_;
  RunningStd std_;
};

inline double combine(double r_ext, double r_i_norm, double beta) { return r_ext + beta * r_i_norm; }

// (r - mean) / max(population std, 1e-8) over one episode.
inline std::vector<double> mnir(std::span<const double> rewards) {
  if (rewards.empty()) throw UsageError("mnir: empty episode");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::max(std::sqrt(var / n), 1e-8);
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / sd);
  return out;
}

}  // namespace smlab
