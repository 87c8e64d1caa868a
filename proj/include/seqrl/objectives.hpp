#pragma once

// Training objectives: teacher-forced MLE and the two REINFORCE estimators.
//
// Both estimators are realized as a surrogate scalar
//     (1/M) * sum_m sum_t coef[m][t] * log P(y_t^m | y_<t^m, x)
// whose coefficients are constants on the tape, so backward() yields the
// policy-gradient estimate without differentiating through rewards.
//
// Time-distributed mode: coef = (normalized) discounted return R_t for each
// grapheme step; the eos step has return 0 (it carries no reward of its own).
// Final-reward mode: coef = the (normalized) sequence reward |ref| - ED on
// every step of the sample.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "seqrl/editdist.hpp"
#include "seqrl/inference.hpp"
#include "seqrl/seq2seq.hpp"

namespace seqrl {

enum class RewardMode { final_reward, time_reward };
enum class Normalization { timewise, across_samples, none };

std::string_view reward_mode_name(RewardMode mode);
RewardMode parse_reward_mode(std::string_view name);
std::string_view normalization_name(Normalization n);
Normalization parse_normalization(std::string_view name);

struct RlConfig {
  RewardMode mode = RewardMode::time_reward;
  double discount = 0.95;
  std::size_t samples = 15;
  double rl_weight = 1.0;
  Normalization normalization = Normalization::timewise;

  // Allowed pairings: final_reward with across_samples, time_reward with
  // timewise; `none` is accepted by both (used by the exact oracles).
  void validate() const;

  bool operator==(const RlConfig&) const = default;
};

// -sum_t log P(y_t); per_step must cover the transcript plus its eos.
ng::Var mle_loss(std::span<const ng::Var> per_step, std::span<const Symbol> transcript);

// Per-step returns of one sample, with a trailing 0 for an emitted eos.
std::vector<double> sample_returns(const Hypothesis& hyp, std::span<const Symbol> ref,
                                   double discount);

// |ref| - ED(hyp, ref), the telescoped total of the step rewards.
double total_reward(const Hypothesis& hyp, std::span<const Symbol> ref);

struct Surrogate {
  ng::Var value;
  // Constant tape leaves holding each sample's coefficients.
  std::vector<ng::Var> coefficients;
};

// (1/M) sum_m sum_t coef[m][t] * log P_t^m.
Surrogate policy_surrogate(ng::Tape& tape, std::span<const TapedSample> samples,
                           const std::vector<std::vector<double>>& coefficients);

struct RlTerm {
  Surrogate surrogate;
  std::vector<std::vector<double>> returns;  // raw per-step returns (time mode)
  std::vector<double> total_rewards;         // per sample
};

// Time-distributed estimator. With `stats` the returns are normalized by the
// given per-step statistics (which are not modified); without, raw returns.
RlTerm reinforce_time(ng::Tape& tape, std::span<const TapedSample> samples,
                      std::span<const Symbol> ref, double discount, const MovingStats* stats);

// Global-reward estimator; `normalize` standardizes rewards across the M >= 2 samples.
RlTerm reinforce_final(ng::Tape& tape, std::span<const TapedSample> samples,
                       std::span<const Symbol> ref, bool normalize);

struct UtteranceGradient {
  Gradients grads;
  double mle_loss = 0.0;
  // Raw returns of every sample (time mode), for the moving statistics.
  std::vector<std::vector<double>> returns;
  std::vector<double> total_rewards;
};

struct RlStep {
  const RlConfig* config = nullptr;
  const MovingStats* stats = nullptr;  // timewise normalization only
  std::uint64_t seed = 0;
  std::size_t utterance_index = 0;
  std::size_t max_len = 0;  // 0 selects default_max_len
};

// Gradient of mle_loss - rl_weight * surrogate for one utterance. With no RL
// step (or rl_weight 0) nothing is sampled and the result is the plain MLE
// gradient.
UtteranceGradient combined_gradient(const ng::Tensor& features, std::span<const Symbol> transcript,
                                    const ModelParams& params, const ModelConfig& config,
                                    const RlStep* rl);

}  // namespace seqrl
