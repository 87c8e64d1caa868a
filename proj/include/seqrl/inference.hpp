#pragma once

// Monte Carlo sampling from the decoder and greedy / beam decoding.
//
// A decode runs for at most max_len decoder steps. A hypothesis that takes
// max_len steps without emitting eos is truncated; its step log-probs then
// have no eos entry.

#include <cstdint>
#include <random>
#include <vector>

#include "seqrl/numgrad.hpp"
#include "seqrl/seq2seq.hpp"

namespace seqrl {

struct Hypothesis {
  Transcript graphemes;                // eos stripped
  std::vector<double> step_log_probs;  // includes the eos step when emitted
  double total_log_prob = 0.0;
  double normalized_score = 0.0;  // total / (|graphemes| + 1)
  bool truncated = false;

  static Hypothesis make(Transcript graphemes, std::vector<double> step_log_probs,
                         bool truncated);
};

struct SampleBatch {
  std::size_t utterance_index = 0;
  std::vector<Hypothesis> samples;
  std::vector<std::uint64_t> seeds;  // substream id of each sample
};

// Decode cap when none is configured: twice the encoder length plus 5.
std::size_t default_max_len(std::size_t encoded_frames);

// Independent stream per (run seed, utterance, sample).
std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t utterance,
                              std::uint64_t sample);

// Inverse-CDF draw from a row of log-probabilities.
Symbol draw_symbol(std::span<const double> log_probs, std::mt19937_64& rng);

struct TapedSample {
  Hypothesis hyp;
  std::vector<ng::Var> step_log_probs;  // parallel to hyp.step_log_probs
};

// Draws M sequences, recording every decoder step on the params' tape so a
// surrogate built from the step log-probs back-propagates into the model.
// Samples with a common prefix share the decoder nodes for that prefix.
std::vector<TapedSample> sample_on_tape(const BoundParams& params, const ModelConfig& config,
                                        const EncoderStates& enc, std::size_t samples,
                                        std::size_t max_len, std::uint64_t seed,
                                        std::size_t utterance_index);

SampleBatch sample_sequences(const ng::Tensor& features, const ModelParams& params,
                             const ModelConfig& config, std::size_t samples,
                             std::size_t max_len, std::uint64_t seed,
                             std::size_t utterance_index);

Hypothesis greedy_decode(const ng::Tensor& features, const ModelParams& params,
                         const ModelConfig& config, std::size_t max_len);

// Expansions of all live hypotheses are pooled and the best `beam` by
// cumulative log-prob survive (ties to the lexicographically smaller
// sequence); survivors ending in eos are finalized. The result maximizes
// normalized_score over finalized hypotheses.
Hypothesis beam_search(const ng::Tensor& features, const ModelParams& params,
                       const ModelConfig& config, std::size_t beam, std::size_t max_len);

}  // namespace seqrl
