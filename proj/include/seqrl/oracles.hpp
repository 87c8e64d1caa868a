#pragma once

// Reference computations over tiny output spaces: exhaustive enumeration of
// decoder outputs, exact expected policy gradients, finite-difference checks
// and a Monte Carlo check of the global-reward estimator. Used by the
// `oracle-check` command and the acceptance suite.

#include <cstdint>
#include <string>
#include <vector>

#include "seqrl/inference.hpp"
#include "seqrl/objectives.hpp"
#include "seqrl/seq2seq.hpp"

namespace seqrl::oracle {

// Two graphemes plus eos, every dimension <= 8, dot-free so all scorer
// parameters exist.
ModelConfig tiny_config(Scorer scorer = Scorer::mlp);

// Uniform [-scale, scale] parameters. Larger than the training init so that
// gradients are well above finite-difference noise.
ModelParams random_params(const ModelConfig& config, std::uint64_t seed, double scale);

// S x F standard normal features.
ng::Tensor random_features(std::size_t frames, std::size_t feature_dim, std::uint64_t seed);

struct Outcome {
  Hypothesis hyp;
  double probability = 0.0;
};

// Every complete output of at most max_len decoder steps: sequences ending in
// eos plus the truncated max_len-grapheme ones. Probabilities sum to 1.
std::vector<Outcome> enumerate_outcomes(const ng::Tensor& features, const ModelParams& params,
                                        const ModelConfig& config, std::size_t max_len);

// Highest normalized score over the enumeration, ties to the lexicographically
// smaller grapheme sequence.
Hypothesis exhaustive_best(const ng::Tensor& features, const ModelParams& params,
                           const ModelConfig& config, std::size_t max_len);

enum class Estimator { global_reward, time_reward };

// sum_y P(y) * g(y), where g is the estimator's gradient for the single
// sample y without normalization. For global_reward this is the exact
// gradient of E[|ref| - ED].
Gradients expected_estimator(const ng::Tensor& features, const ModelParams& params,
                             const ModelConfig& config, std::span<const Symbol> ref,
                             std::size_t max_len, Estimator estimator, double discount);

double max_abs_difference(const Gradients& a, const Gradients& b);

struct FdEntry {
  std::string name;
  // Tensor-level error ||a - n|| / max(||a||, floor) over all its scalars.
  double rel_error = 0.0;
  double grad_norm = 0.0;
  // Worst single scalar by |a - n| / max(|a|, floor).
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double worst_scalar_error = 0.0;
};

struct FdReport {
  std::vector<FdEntry> parameters;  // one per parameter tensor
  std::size_t checked = 0;
  double max_rel_error = 0.0;         // worst tensor-level error
  double max_scalar_error = 0.0;      // worst single-scalar error
  double max_abs_error = 0.0;         // worst |a - n| over all scalars
};

// Central differences of the teacher-forced MLE loss over every scalar of
// every parameter.
FdReport check_mle_gradients(const ng::Tensor& features, const ModelParams& params,
                             const ModelConfig& config, std::span<const Symbol> transcript,
                             double h = 1e-5, double floor = 1e-8);

struct McReport {
  std::size_t components = 0;
  std::size_t within_3se = 0;
  std::size_t within_5se = 0;
  double max_abs_z = 0.0;
  std::size_t batches = 0;
};

// Runs `batches` independent batches of the unnormalized global-reward
// estimator (M samples each) and compares the per-component mean with the
// enumerated expectation. Components with zero sample variance must match
// exactly (to 1e-12) to count as within bounds.
McReport monte_carlo_check(const ng::Tensor& features, const ModelParams& params,
                           const ModelConfig& config, std::span<const Symbol> ref,
                           std::size_t max_len, std::size_t batches, std::size_t samples,
                           std::uint64_t seed);

}  // namespace seqrl::oracle
