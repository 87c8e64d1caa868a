#include "seqrl/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "seqrl/errors.hpp"

namespace seqrl {

using ng::Var;

Hypothesis Hypothesis::make(Transcript graphemes, std::vector<double> step_log_probs,
                            bool truncated) {
  Hypothesis h;
  h.graphemes = std::move(graphemes);
  h.step_log_probs = std::move(step_log_probs);
  h.truncated = truncated;
  for (double lp : h.step_log_probs) h.total_log_prob += lp;
  h.normalized_score = h.total_log_prob / static_cast<double>(h.graphemes.size() + 1);
  return h;
}

std::size_t default_max_len(std::size_t encoded_frames) { return 2 * encoded_frames + 5; }

std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t utterance,
                              std::uint64_t sample) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(utterance),
                    static_cast<std::uint32_t>(utterance >> 32),
                    static_cast<std::uint32_t>(sample), static_cast<std::uint32_t>(sample >> 32)};
  return std::mt19937_64(seq);
}

Symbol draw_symbol(std::span<const double> log_probs, std::mt19937_64& rng) {
  // 53 random bits -> uniform in [0, 1)
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t j = 0; j < log_probs.size(); ++j) {
    double p = std::exp(log_probs[j]);
    if (p > 0.0) last_positive = j;
    cumulative += p;
    if (u < cumulative) return static_cast<Symbol>(j);
  }
  return static_cast<Symbol>(last_positive);
}

namespace {

void check_max_len(std::size_t max_len) {
  if (max_len == 0) throw ContractError("max_len must be at least 1");
}

std::span<const double> row_values(Var v) { return v.value().values; }

}  // namespace

std::vector<TapedSample> sample_on_tape(const BoundParams& params, const ModelConfig& config,
                                        const EncoderStates& enc, std::size_t samples,
                                        std::size_t max_len, std::uint64_t seed,
                                        std::size_t utterance_index) {
  if (samples == 0) throw ContractError("sample count must be at least 1");
  check_max_len(max_len);
  const Symbol eos = config.eos_id();

  // prefix -> decoder output for the step that follows it
  std::map<Transcript, StepOutput> cache;
  cache.emplace(Transcript{},
                decode_step(params, config, enc, config.sos_id(), initial_state(params, config)));

  std::vector<TapedSample> out;
  out.reserve(samples);
  for (std::size_t m = 0; m < samples; ++m) {
    auto rng = sample_stream(seed, utterance_index, m);
    Transcript prefix;
    std::vector<double> lps;
    std::vector<Var> lp_vars;
    bool ended = false;
    for (std::size_t step = 0; step < max_len; ++step) {
      const StepOutput& here = cache.at(prefix);
      Symbol y = draw_symbol(row_values(here.log_probs), rng);
      lp_vars.push_back(ng::pick(here.log_probs, static_cast<std::size_t>(y)));
      lps.push_back(lp_vars.back().item());
      if (y == eos) {
        ended = true;
        break;
      }
      Transcript next = prefix;
      next.push_back(y);
      if (step + 1 < max_len && !cache.count(next)) {
        StepOutput child = decode_step(params, config, enc, y, here.state);
        cache.emplace(next, std::move(child));
      }
      prefix = std::move(next);
    }
    TapedSample s;
    s.hyp = Hypothesis::make(std::move(prefix), std::move(lps), !ended);
    s.step_log_probs = std::move(lp_vars);
    out.push_back(std::move(s));
  }
  return out;
}

SampleBatch sample_sequences(const ng::Tensor& features, const ModelParams& params,
                             const ModelConfig& config, std::size_t samples,
                             std::size_t max_len, std::uint64_t seed,
                             std::size_t utterance_index) {
  ng::Tape tape;
  BoundParams bound(tape, params, false);
  EncoderStates enc = encode(bound, config, features);
  auto taped = sample_on_tape(bound, config, enc, samples, max_len, seed, utterance_index);
  SampleBatch batch;
  batch.utterance_index = utterance_index;
  for (std::size_t m = 0; m < taped.size(); ++m) {
    batch.samples.push_back(std::move(taped[m].hyp));
    batch.seeds.push_back(m);
  }
  return batch;
}

Hypothesis greedy_decode(const ng::Tensor& features, const ModelParams& params,
                         const ModelConfig& config, std::size_t max_len) {
  check_max_len(max_len);
  ng::Tape tape;
  BoundParams bound(tape, params, false);
  EncoderStates enc = encode(bound, config, features);
  DecoderState state = initial_state(bound, config);
  Symbol prev = config.sos_id();
  Transcript graphemes;
  std::vector<double> lps;
  for (std::size_t step = 0; step < max_len; ++step) {
    StepOutput out = decode_step(bound, config, enc, prev, state);
    auto row = row_values(out.log_probs);
    // max_element returns the first maximum, so ties go to the smaller id.
    auto best = static_cast<Symbol>(std::max_element(row.begin(), row.end()) - row.begin());
    lps.push_back(row[static_cast<std::size_t>(best)]);
    if (best == config.eos_id()) return Hypothesis::make(std::move(graphemes), std::move(lps), false);
    graphemes.push_back(best);
    state = out.state;
    prev = best;
  }
  return Hypothesis::make(std::move(graphemes), std::move(lps), true);
}

namespace {

struct BeamEntry {
  Transcript emitted;  // graphemes, plus eos when finished
  std::vector<double> lps;
  double score = 0.0;  // cumulative log-prob
  DecoderState state;
};

// Higher cumulative score first, then the lexicographically smaller sequence.
bool beam_order(const BeamEntry& a, const BeamEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.emitted < b.emitted;
}

}  // namespace

Hypothesis beam_search(const ng::Tensor& features, const ModelParams& params,
                       const ModelConfig& config, std::size_t beam, std::size_t max_len) {
  if (beam == 0) throw ContractError("beam width must be at least 1");
  check_max_len(max_len);
  ng::Tape tape;
  BoundParams bound(tape, params, false);
  EncoderStates enc = encode(bound, config, features);
  const Symbol eos = config.eos_id();

  std::vector<BeamEntry> live(1);
  live[0].state = initial_state(bound, config);
  std::vector<Hypothesis> finished;

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<BeamEntry> pool;
    for (const auto& entry : live) {
      Symbol prev = entry.emitted.empty() ? config.sos_id() : entry.emitted.back();
      StepOutput out = decode_step(bound, config, enc, prev, entry.state);
      auto row = row_values(out.log_probs);
      for (std::size_t y = 0; y < row.size(); ++y) {
        BeamEntry next;
        next.emitted = entry.emitted;
        next.emitted.push_back(static_cast<Symbol>(y));
        next.lps = entry.lps;
        next.lps.push_back(row[y]);
        next.score = entry.score + row[y];
        next.state = out.state;
        pool.push_back(std::move(next));
      }
    }
    std::size_t keep = std::min(beam, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(),
                      beam_order);
    pool.resize(keep);
    live.clear();
    for (auto& entry : pool) {
      if (entry.emitted.back() == eos) {
        entry.emitted.pop_back();
        finished.push_back(Hypothesis::make(std::move(entry.emitted), std::move(entry.lps), false));
      } else {
        live.push_back(std::move(entry));
      }
    }
  }
  for (auto& entry : live) {
    finished.push_back(Hypothesis::make(std::move(entry.emitted), std::move(entry.lps), true));
  }

  const Hypothesis* best = nullptr;
  for (const auto& h : finished) {
    if (!best || h.normalized_score > best->normalized_score ||
        (h.normalized_score == best->normalized_score && h.graphemes < best->graphemes)) {
      best = &h;
    }
  }
  return *best;
}

}  // namespace seqrl
