#pragma once

// Levenshtein distance and the per-step rewards built on it.
//
// A hypothesis y earns r_1 = |ref| - ED(y[1:1], ref) on its first grapheme and
// r_t = ED(y[1:t-1], ref) - ED(y[1:t], ref) afterwards, so the rewards
// telescope: sum_t r_t == |ref| - ED(y, ref). Returns discount the future:
// R_t = sum_{i>=t} gamma^(i-t) r_i. Sequences exclude eos throughout.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "seqrl/types.hpp"

namespace seqrl {

inline constexpr double kNormEpsilon = 1e-8;

// Unit-cost insert/delete/substitute distance.
std::size_t edit_distance(std::span<const Symbol> a, std::span<const Symbol> b);

// Element t is ED(hyp[0..t], ref); one DP pass reading the last column of
// each row. hyp must be nonempty.
std::vector<std::size_t> prefix_edit_distances(std::span<const Symbol> hyp,
                                               std::span<const Symbol> ref);

std::vector<double> step_rewards(std::span<const Symbol> hyp, std::span<const Symbol> ref);

// Right-to-left scan R[t] = r[t] + gamma * R[t+1]; gamma in [0, 1].
std::vector<double> discounted_returns(std::span<const double> rewards, double discount);

struct RewardTrace {
  std::vector<double> step_rewards;
  std::vector<double> returns;
  std::optional<std::vector<double>> normalized_returns;
  double discount = 1.0;

  // Empty hypotheses give an empty trace (nothing was emitted to reward).
  static RewardTrace build(std::span<const Symbol> hyp, std::span<const Symbol> ref,
                           double discount);
};

// Per-time-step exponential moving mean and variance of returns. Slots that
// have never been updated read as mean 0, stddev 1.
class MovingStats {
 public:
  static constexpr double kDefaultDecay = 0.99;

  explicit MovingStats(double decay = kDefaultDecay);
  MovingStats(double decay, std::vector<double> means, std::vector<double> variances);

  double decay() const { return decay_; }
  double mean(std::size_t t) const;
  double stddev(std::size_t t) const;
  std::size_t slots() const { return means_.size(); }
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& variances() const { return variances_; }

  // (R_t - mu_t) / (sigma_t + eps), using the current statistics.
  std::vector<double> normalize(std::span<const double> returns) const;

  // One EMA step per time slot over every sequence in the batch that reaches
  // that slot: mu <- d mu + (1-d) mean(R_t); var <- d var + (1-d) mean((R_t - mu)^2).
  void update(const std::vector<std::vector<double>>& batch);

 private:
  void grow(std::size_t n);

  double decay_;
  std::vector<double> means_;
  std::vector<double> variances_;
};

// Normalizes every sequence with the pre-batch statistics, then folds the
// batch into them.
std::vector<std::vector<double>> normalize_timewise(
    const std::vector<std::vector<double>>& batch, MovingStats& stats);

// (R[m] - mean) / (population stddev + eps) across M >= 2 samples.
std::vector<double> normalize_final(std::span<const double> rewards);

}  // namespace seqrl
