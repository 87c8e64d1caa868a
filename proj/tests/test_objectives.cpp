#include <doctest.h>

#include <cmath>
#include <numeric>

#include "seqrl/errors.hpp"
#include "seqrl/objectives.hpp"
#include "seqrl/oracles.hpp"

using namespace seqrl;

namespace {

// E[|ref| - ED(y, ref)] by enumeration; differentiated numerically below.
double expected_reward(const ng::Tensor& features, const ModelParams& params,
                       const ModelConfig& c, const Transcript& ref, std::size_t max_len) {
  double total = 0.0;
  for (const auto& o : oracle::enumerate_outcomes(features, params, c, max_len)) {
    total += o.probability *
             (static_cast<double>(ref.size()) - static_cast<double>(edit_distance(o.hyp.graphemes, ref)));
  }
  return total;
}

TapedSample leaf_sample(ng::Tape& tape, Transcript graphemes, std::vector<double> lps,
                        bool truncated) {
  TapedSample s;
  for (double lp : lps) s.step_log_probs.push_back(tape.leaf(ng::Tensor::scalar(lp, true)));
  s.hyp = Hypothesis::make(std::move(graphemes), std::move(lps), truncated);
  return s;
}

}  // namespace

TEST_CASE("mle_loss sums negated step log-probs") {
  ng::Tape tape;
  std::vector<ng::Var> steps = {tape.leaf(ng::Tensor::scalar(-1.0, true)),
                                tape.leaf(ng::Tensor::scalar(-2.5, true))};
  Transcript one = {0};
  auto loss = mle_loss(steps, one);
  CHECK(loss.item() == 3.5);
  tape.backward(loss);
  CHECK(tape.grad(steps[0])[0] == -1.0);
  Transcript two = {0, 1};
  ng::Tape other;
  std::vector<ng::Var> short_steps = {other.leaf(ng::Tensor::scalar(-1.0, true))};
  CHECK_THROWS_AS(mle_loss(short_steps, two), ContractError);
}

TEST_CASE("sample_returns and total_reward") {
  Transcript ref = {0, 1};
  auto ended = Hypothesis::make({0, 1}, {-1, -1, -1}, false);
  CHECK(sample_returns(ended, ref, 0.5) == std::vector<double>{1.5, 1.0, 0.0});
  auto cut = Hypothesis::make({1, 0}, {-1, -1}, true);
  CHECK(sample_returns(cut, ref, 0.5) == std::vector<double>{0.5, -1.0});
  auto empty = Hypothesis::make({}, {-1}, false);
  CHECK(sample_returns(empty, ref, 0.9) == std::vector<double>{0.0});
  CHECK(total_reward(ended, ref) == 2.0);
  CHECK(total_reward(cut, ref) == 0.0);
  CHECK(total_reward(empty, ref) == 0.0);
  CHECK_THROWS_AS(total_reward(ended, Transcript{}), ContractError);
}

TEST_CASE("RlConfig pairing rules and name parsing") {
  RlConfig c;
  CHECK_NOTHROW(c.validate());
  c.normalization = Normalization::across_samples;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.mode = RewardMode::final_reward;
  CHECK_NOTHROW(c.validate());
  c.samples = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.normalization = Normalization::none;
  CHECK_NOTHROW(c.validate());
  c.normalization = Normalization::timewise;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  RlConfig d;
  d.discount = 1.01;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d.discount = 0.0;
  d.rl_weight = -1.0;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d.rl_weight = 0.0;
  d.samples = 0;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  CHECK(parse_reward_mode("time_reward") == RewardMode::time_reward);
  CHECK(parse_normalization(normalization_name(Normalization::across_samples)) ==
        Normalization::across_samples);
  CHECK_THROWS_AS(parse_reward_mode("dense"), ConfigError);
  CHECK_THROWS_AS(parse_normalization("batch"), ConfigError);
}

TEST_CASE("policy_surrogate value and gradients") {
  ng::Tape tape;
  std::vector<TapedSample> samples;
  samples.push_back(leaf_sample(tape, {0}, {-0.5, -1.0}, false));
  samples.push_back(leaf_sample(tape, {1, 1}, {-2.0, -0.25}, true));
  std::vector<std::vector<double>> coef = {{2.0, 0.0}, {-1.0, 3.0}};
  auto s = policy_surrogate(tape, samples, coef);
  CHECK(s.value.item() == doctest::Approx((2.0 * -0.5 + 0.0 + -1.0 * -2.0 + 3.0 * -0.25) / 2.0));
  tape.backward(s.value);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t t = 0; t < 2; ++t)
      CHECK(tape.grad(samples[m].step_log_probs[t])[0] == coef[m][t] / 2.0);
  // Coefficients are constants: no gradient flows into them.
  CHECK_FALSE(tape.has_grad(s.coefficients[0]));

  ng::Tape t2;
  std::vector<TapedSample> one;
  one.push_back(leaf_sample(t2, {0}, {-0.5, -1.0}, false));
  CHECK_THROWS_AS(policy_surrogate(t2, one, {{1.0}}), ContractError);
  CHECK_THROWS_AS(policy_surrogate(t2, one, {}), ContractError);
}

TEST_CASE("reinforce_final normalizes across samples") {
  ng::Tape tape;
  std::vector<TapedSample> samples;
  samples.push_back(leaf_sample(tape, {0, 1}, {-1, -1, -1}, false));
  samples.push_back(leaf_sample(tape, {1}, {-1, -1}, false));
  samples.push_back(leaf_sample(tape, {}, {-1}, false));
  Transcript ref = {0, 1};
  auto raw = reinforce_final(tape, samples, ref, false);
  CHECK(raw.total_rewards == std::vector<double>{2.0, 1.0, 0.0});
  CHECK(raw.returns.empty());
  auto norm = reinforce_final(tape, samples, ref, true);
  double sum = 0.0;
  for (const auto& c : norm.surrogate.coefficients) sum += c.value().values[0];
  CHECK(std::abs(sum) <= 1e-12);
  std::vector<TapedSample> single(samples.begin(), samples.begin() + 1);
  CHECK_THROWS_AS(reinforce_final(tape, single, ref, true), ContractError);
}

TEST_CASE("reinforce_time coefficients are the (normalized) returns") {
  ng::Tape tape;
  std::vector<TapedSample> samples;
  samples.push_back(leaf_sample(tape, {0, 0}, {-1, -1, -1}, false));
  Transcript ref = {0, 1};
  auto raw = reinforce_time(tape, samples, ref, 1.0, nullptr);
  // step rewards [1, 0] -> returns [1, 0], plus eos 0
  CHECK(raw.returns[0] == std::vector<double>{1.0, 0.0, 0.0});
  CHECK(raw.surrogate.coefficients[0].value().values == std::vector<double>{1.0, 0.0, 0.0});
  MovingStats stats(0.9, {1.0, 1.0, 1.0}, {4.0, 4.0, 4.0});
  auto norm = reinforce_time(tape, samples, ref, 1.0, &stats);
  auto coef = norm.surrogate.coefficients[0].value().values;
  CHECK(coef[0] == 0.0);
  CHECK(coef[1] == doctest::Approx(-1.0 / (2.0 + kNormEpsilon)));
  // Statistics are read, not updated.
  CHECK(stats.mean(0) == 1.0);
}

TEST_CASE("exact global-reward gradient equals the derivative of expected reward") {
  ModelConfig c = oracle::tiny_config();
  auto params = oracle::random_params(c, 31, 1.0);
  auto features = oracle::random_features(6, c.feature_dim, 32);
  Transcript ref = {0, 1};
  auto exact = oracle::expected_estimator(features, params, c, ref, 3,
                                          oracle::Estimator::global_reward, 1.0);
  const double h = 1e-5;
  double diff_sq = 0.0, norm_sq = 0.0;
  ModelParams probe = params;
  for (auto& [name, t] : probe.tensors) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      double saved = t.values[i];
      t.values[i] = saved + h;
      double up = expected_reward(features, probe, c, ref, 3);
      t.values[i] = saved - h;
      double down = expected_reward(features, probe, c, ref, 3);
      t.values[i] = saved;
      double numeric = (up - down) / (2 * h);
      double a = exact.at(name)[i];
      diff_sq += (a - numeric) * (a - numeric);
      norm_sq += a * a;
    }
  }
  CHECK(std::sqrt(diff_sq) <= 1e-6 * std::sqrt(norm_sq));
}

TEST_CASE("time-distributed and global estimators agree in expectation at gamma 1") {
  for (std::uint64_t seed : {41, 42, 43}) {
    ModelConfig c = oracle::tiny_config(seed == 42 ? Scorer::bilinear : Scorer::mlp);
    auto params = oracle::random_params(c, seed, 1.0);
    auto features = oracle::random_features(6, c.feature_dim, seed + 1);
    Transcript ref = {1, 0};
    auto global = oracle::expected_estimator(features, params, c, ref, 3,
                                             oracle::Estimator::global_reward, 1.0);
    auto time = oracle::expected_estimator(features, params, c, ref, 3,
                                           oracle::Estimator::time_reward, 1.0);
    CHECK(oracle::max_abs_difference(global, time) <= 1e-10);
    // Discounting breaks the equality.
    auto discounted = oracle::expected_estimator(features, params, c, ref, 3,
                                                 oracle::Estimator::time_reward, 0.5);
    CHECK(oracle::max_abs_difference(global, discounted) > 1e-6);
  }
}

TEST_CASE("combined_gradient: weight 0 is MLE and the RL term is additive") {
  ModelConfig c = oracle::tiny_config();
  c.vocab_size = 4;
  auto params = oracle::random_params(c, 51, 0.5);
  auto features = oracle::random_features(7, c.feature_dim, 52);
  Transcript ref = {0, 2, 1};

  auto plain = combined_gradient(features, ref, params, c, nullptr);
  RlConfig rc;
  rc.rl_weight = 0.0;
  RlStep step{&rc, nullptr, 9, 3, 0};
  auto zero = combined_gradient(features, ref, params, c, &step);
  CHECK(zero.grads == plain.grads);
  CHECK(zero.mle_loss == plain.mle_loss);
  CHECK(zero.returns.empty());

  MovingStats stats;
  rc.rl_weight = 1.0;
  step.stats = &stats;
  auto one = combined_gradient(features, ref, params, c, &step);
  rc.rl_weight = 2.0;
  auto two = combined_gradient(features, ref, params, c, &step);
  CHECK(one.returns.size() == rc.samples);
  CHECK(one.total_rewards.size() == rc.samples);
  for (const auto& [name, g0] : plain.grads) {
    const auto& g1 = one.grads.at(name);
    const auto& g2 = two.grads.at(name);
    for (std::size_t i = 0; i < g0.size(); ++i) {
      REQUIRE(std::abs((g2[i] - g1[i]) - (g1[i] - g0[i])) <= 1e-10);
    }
  }
  // Same seed and utterance index: same draw.
  rc.rl_weight = 1.0;
  CHECK(combined_gradient(features, ref, params, c, &step).grads == one.grads);

  step.stats = nullptr;
  CHECK_THROWS_AS(combined_gradient(features, ref, params, c, &step), ContractError);
  CHECK_THROWS_AS(combined_gradient(features, Transcript{}, params, c, nullptr), ContractError);
}

TEST_CASE("combined_gradient with final reward and across-sample normalization") {
  ModelConfig c = oracle::tiny_config();
  auto params = oracle::random_params(c, 61, 0.5);
  auto features = oracle::random_features(6, c.feature_dim, 62);
  Transcript ref = {0, 1};
  RlConfig rc;
  rc.mode = RewardMode::final_reward;
  rc.normalization = Normalization::across_samples;
  rc.samples = 6;
  RlStep step{&rc, nullptr, 3, 0, 4};
  auto g = combined_gradient(features, ref, params, c, &step);
  CHECK(g.returns.empty());
  REQUIRE(g.total_rewards.size() == 6);
  for (double r : g.total_rewards) {
    CHECK(r <= 2.0);
    CHECK(r >= 2.0 - 4.0);  // at most max_len + |ref| edits
  }
}
