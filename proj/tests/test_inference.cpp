#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "seqrl/errors.hpp"
#include "seqrl/inference.hpp"
#include "seqrl/oracles.hpp"

using namespace seqrl;

namespace {

// Teacher-forced step log-probs of a hypothesis, eos appended when it ended.
std::vector<double> rescore(const Hypothesis& h, const ng::Tensor& features,
                            const ModelParams& params, const ModelConfig& c) {
  Transcript emitted = h.graphemes;
  if (!h.truncated) emitted.push_back(c.eos_id());
  ng::Tape tape;
  BoundParams bound(tape, params, false);
  auto enc = encode(bound, c, features);
  std::vector<double> out;
  for (const auto& v : score_emissions(bound, c, enc, emitted)) out.push_back(v.item());
  return out;
}

struct Case {
  ModelConfig config;
  ModelParams params;
  ng::Tensor features;
};

// Random model and input; vocabulary and scorer vary with the seed.
Case random_case(std::uint64_t seed) {
  Scorer scorers[] = {Scorer::mlp, Scorer::dot, Scorer::bilinear};
  ModelConfig c = oracle::tiny_config(scorers[seed % 3]);
  c.vocab_size = 3 + seed % 4;
  auto params = oracle::random_params(c, seed, 1.0);
  auto features = oracle::random_features(4 + seed % 5, c.feature_dim, seed + 1000);
  return {c, params, features};
}

}  // namespace

TEST_CASE("Hypothesis::make totals and normalization") {
  auto h = Hypothesis::make({0, 1}, {-1.0, -2.0, -3.0}, false);
  CHECK(h.total_log_prob == -6.0);
  CHECK(h.normalized_score == -2.0);
  auto t = Hypothesis::make({0, 1, 1}, {-1.0, -1.0, -1.0}, true);
  CHECK(t.normalized_score == -0.75);
  CHECK(t.truncated);
  auto e = Hypothesis::make({}, {-0.5}, false);
  CHECK(e.normalized_score == -0.5);
  CHECK(default_max_len(10) == 25);
}

TEST_CASE("draw_symbol follows the distribution") {
  const double ninf = -std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(3);
  std::vector<double> certain = {ninf, 0.0, ninf};
  for (int i = 0; i < 100; ++i) REQUIRE(draw_symbol(certain, rng) == 1);

  std::vector<double> p = {0.2, 0.5, 0.3};
  std::vector<double> lp;
  for (double x : p) lp.push_back(std::log(x));
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(draw_symbol(lp, rng))];
  for (std::size_t j = 0; j < 3; ++j) {
    double se = std::sqrt(p[j] * (1 - p[j]) / n);
    CHECK(std::abs(counts[j] / double(n) - p[j]) <= 5 * se);
  }
}

TEST_CASE("sample streams are keyed by seed, utterance and sample") {
  auto a = sample_stream(1, 2, 3);
  auto b = sample_stream(1, 2, 3);
  CHECK(a() == b());
  std::uint64_t base = sample_stream(1, 2, 3)();
  CHECK(sample_stream(2, 2, 3)() != base);
  CHECK(sample_stream(1, 3, 3)() != base);
  CHECK(sample_stream(1, 2, 4)() != base);
  CHECK(sample_stream(1ull << 32, 2, 3)() != sample_stream(0, 2, 3)());
}

TEST_CASE("samples are reproducible and carry teacher-forced log-probs") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto k = random_case(seed);
    auto a = sample_sequences(k.features, k.params, k.config, 8, 6, 77, seed);
    auto b = sample_sequences(k.features, k.params, k.config, 8, 6, 77, seed);
    REQUIRE(a.samples.size() == 8);
    CHECK(a.utterance_index == seed);
    for (std::size_t m = 0; m < 8; ++m) {
      const auto& h = a.samples[m];
      CHECK(h.graphemes == b.samples[m].graphemes);
      CHECK(h.step_log_probs == b.samples[m].step_log_probs);
      CHECK(h.step_log_probs.size() == h.graphemes.size() + (h.truncated ? 0 : 1));
      CHECK(h.graphemes.size() <= 6);
      if (h.truncated) CHECK(h.graphemes.size() == 6);
      auto want = rescore(h, k.features, k.params, k.config);
      for (std::size_t t = 0; t < want.size(); ++t) {
        CHECK(std::abs(h.step_log_probs[t] - want[t]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("sample frequencies match enumerated probabilities") {
  ModelConfig c = oracle::tiny_config();
  auto params = oracle::random_params(c, 8, 1.0);
  auto features = oracle::random_features(6, c.feature_dim, 9);
  auto outcomes = oracle::enumerate_outcomes(features, params, c, 3);
  double total = 0.0;
  std::map<std::pair<Transcript, bool>, double> prob;
  for (const auto& o : outcomes) {
    total += o.probability;
    prob[{o.hyp.graphemes, o.hyp.truncated}] = o.probability;
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);
  // 3 grapheme-or-eos choices per step, 3 steps: 1 + 2 + 4 ended, 8 truncated.
  CHECK(outcomes.size() == 15);

  const std::size_t n = 20000;
  auto batch = sample_sequences(features, params, c, n, 3, 5, 0);
  std::map<std::pair<Transcript, bool>, double> seen;
  for (const auto& h : batch.samples) seen[{h.graphemes, h.truncated}] += 1.0;
  for (const auto& [key, p] : prob) {
    double se = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(seen[key] / n - p) <= 5 * se + 1e-12);
  }
}

TEST_CASE("greedy picks the argmax at each step") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto k = random_case(seed);
    auto g = greedy_decode(k.features, k.params, k.config, 8);
    // Each step is the arg max given the greedy prefix.
    ng::Tape tape;
    BoundParams bound(tape, k.params, false);
    auto enc = encode(bound, k.config, k.features);
    auto state = initial_state(bound, k.config);
    Symbol prev = k.config.sos_id();
    Transcript emitted = g.graphemes;
    if (!g.truncated) emitted.push_back(k.config.eos_id());
    for (std::size_t t = 0; t < emitted.size(); ++t) {
      auto out = decode_step(bound, k.config, enc, prev, state);
      const auto& row = out.log_probs.value().values;
      for (double v : row) REQUIRE(v <= row[static_cast<std::size_t>(emitted[t])]);
      CHECK(g.step_log_probs[t] == row[static_cast<std::size_t>(emitted[t])]);
      prev = emitted[t];
      state = out.state;
    }
  }
}

TEST_CASE("beam search contracts on random models") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    CAPTURE(seed);
    auto k = random_case(seed);
    auto g = greedy_decode(k.features, k.params, k.config, 6);
    auto b1 = beam_search(k.features, k.params, k.config, 1, 6);
    CHECK(b1.graphemes == g.graphemes);
    CHECK(b1.step_log_probs == g.step_log_probs);
    CHECK(b1.truncated == g.truncated);

    auto b4 = beam_search(k.features, k.params, k.config, 4, 6);
    auto want = rescore(b4, k.features, k.params, k.config);
    REQUIRE(want.size() == b4.step_log_probs.size());
    for (std::size_t t = 0; t < want.size(); ++t) {
      CHECK(std::abs(b4.step_log_probs[t] - want[t]) <= 1e-12);
    }
  }
}

TEST_CASE("a beam as wide as the output tree finds the exhaustive optimum") {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    CAPTURE(seed);
    ModelConfig c = oracle::tiny_config(seed % 2 ? Scorer::mlp : Scorer::bilinear);
    auto params = oracle::random_params(c, seed, 1.5);
    auto features = oracle::random_features(5, c.feature_dim, seed + 50);
    auto best = oracle::exhaustive_best(features, params, c, 3);
    auto beam = beam_search(features, params, c, 27, 3);
    CHECK(beam.graphemes == best.graphemes);
    CHECK(beam.truncated == best.truncated);
    CHECK(std::abs(beam.normalized_score - best.normalized_score) <= 1e-12);
  }
}

TEST_CASE("decoding argument errors") {
  auto k = random_case(1);
  CHECK_THROWS_AS(beam_search(k.features, k.params, k.config, 0, 5), ContractError);
  CHECK_THROWS_AS(beam_search(k.features, k.params, k.config, 2, 0), ContractError);
  CHECK_THROWS_AS(greedy_decode(k.features, k.params, k.config, 0), ContractError);
  CHECK_THROWS_AS(sample_sequences(k.features, k.params, k.config, 0, 5, 1, 0), ContractError);
  CHECK_THROWS_AS(sample_sequences(k.features, k.params, k.config, 2, 0, 1, 0), ContractError);
}
