#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "seqrl/editdist.hpp"
#include "seqrl/errors.hpp"
#include "test_util.hpp"

using namespace seqrl;
using testutil::random_sequence;

namespace {

Transcript str(const char* s) {
  Transcript out;
  for (; *s; ++s) out.push_back(static_cast<Symbol>(*s - 'a'));
  return out;
}

// Recursive definition with memoization, independent of the library's DP.
std::size_t recursive_ed(const Transcript& a, const Transcript& b) {
  std::vector<std::vector<long>> memo(a.size() + 1, std::vector<long>(b.size() + 1, -1));
  std::function<long(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> long {
    if (i == 0) return static_cast<long>(j);
    if (j == 0) return static_cast<long>(i);
    long& m = memo[i][j];
    if (m >= 0) return m;
    long sub = go(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1);
    m = std::min({go(i - 1, j) + 1, go(i, j - 1) + 1, sub});
    return m;
  };
  return static_cast<std::size_t>(go(a.size(), b.size()));
}

}  // namespace

TEST_CASE("edit_distance examples") {
  CHECK(edit_distance(str(""), str("abc")) == 3);
  CHECK(edit_distance(str("abc"), str("abc")) == 0);
  CHECK(edit_distance(str("sunday"), str("saturday")) == 3);
  CHECK(recursive_ed(str("sunday"), str("saturday")) == 3);
  CHECK(edit_distance(str("abc"), str("")) == 3);
  CHECK(edit_distance(str(""), str("")) == 0);
}

TEST_CASE("edit_distance agrees with the recursive definition on fuzzed pairs") {
  std::mt19937_64 rng(21);
  for (int n = 0; n < 300; ++n) {
    auto a = random_sequence(rng, 0, 9, 4);
    auto b = random_sequence(rng, 0, 9, 4);
    REQUIRE(edit_distance(a, b) == recursive_ed(a, b));
  }
}

TEST_CASE("edit_distance is symmetric and satisfies the triangle inequality") {
  std::mt19937_64 rng(22);
  for (int n = 0; n < 500; ++n) {
    auto a = random_sequence(rng, 0, 15, 5);
    auto b = random_sequence(rng, 0, 15, 5);
    auto c = random_sequence(rng, 0, 15, 5);
    REQUIRE(edit_distance(a, b) == edit_distance(b, a));
    REQUIRE(edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c));
  }
}

TEST_CASE("prefix_edit_distances examples and oracle equivalence") {
  CHECK(prefix_edit_distances(str("ab"), str("ab")) == std::vector<std::size_t>{1, 0});
  CHECK(prefix_edit_distances(str("ba"), str("ab")) == std::vector<std::size_t>{1, 2});
  CHECK_THROWS_AS(prefix_edit_distances(str(""), str("ab")), ContractError);

  std::mt19937_64 rng(23);
  for (int n = 0; n < 300; ++n) {
    auto hyp = random_sequence(rng, 1, 20, 8);
    auto ref = random_sequence(rng, 0, 20, 8);
    auto prefix = prefix_edit_distances(hyp, ref);
    REQUIRE(prefix.size() == hyp.size());
    for (std::size_t t = 0; t < hyp.size(); ++t) {
      Transcript head(hyp.begin(), hyp.begin() + static_cast<std::ptrdiff_t>(t + 1));
      REQUIRE(prefix[t] == edit_distance(head, ref));
    }
  }
  auto x = str("cabbage");
  CHECK(prefix_edit_distances(x, x).back() == 0);
}

TEST_CASE("step_rewards examples and errors") {
  CHECK(step_rewards(str("ab"), str("ab")) == std::vector<double>{1, 1});
  CHECK(step_rewards(str("ba"), str("ab")) == std::vector<double>{1, -1});
  CHECK_THROWS_AS(step_rewards(str("a"), str("")), ContractError);
  CHECK_THROWS_AS(step_rewards(str(""), str("a")), ContractError);
  auto r = step_rewards(str("abcab"), str("abcab"));
  CHECK(std::accumulate(r.begin(), r.end(), 0.0) == 5.0);
}

TEST_CASE("telescoping identity over fuzzed pairs") {
  std::mt19937_64 rng(24);
  for (int n = 0; n < 1000; ++n) {
    auto hyp = random_sequence(rng, 1, 20, 8);
    auto ref = random_sequence(rng, 1, 20, 8);
    auto r = step_rewards(hyp, ref);
    double total = 0.0;
    for (double x : r) {
      REQUIRE(x == std::round(x));
      total += x;
    }
    REQUIRE(total == static_cast<double>(ref.size()) - static_cast<double>(edit_distance(hyp, ref)));
  }
}

TEST_CASE("discounted_returns examples and properties") {
  CHECK(discounted_returns(std::vector<double>{1, 1}, 0.0) == std::vector<double>{1, 1});
  CHECK(discounted_returns(std::vector<double>{1, -1}, 0.5) == std::vector<double>{0.5, -1});
  for (double g : {0.0, 0.3, 1.0}) {
    CHECK(discounted_returns(std::vector<double>{2}, g) == std::vector<double>{2});
  }
  CHECK_THROWS_AS(discounted_returns(std::vector<double>{1}, 1.5), ContractError);
  CHECK_THROWS_AS(discounted_returns(std::vector<double>{1}, -0.1), ContractError);
  CHECK(discounted_returns(std::vector<double>{}, 0.9).empty());

  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int n = 0; n < 100; ++n) {
    std::vector<double> r(1 + rng() % 15);
    for (auto& x : r) x = std::round(u(rng));
    // gamma = 1: suffix sums; gamma = 0: the rewards themselves.
    auto one = discounted_returns(r, 1.0);
    auto zero = discounted_returns(r, 0.0);
    for (std::size_t t = 0; t < r.size(); ++t) {
      REQUIRE(one[t] == std::accumulate(r.begin() + static_cast<std::ptrdiff_t>(t), r.end(), 0.0));
      REQUIRE(zero[t] == r[t]);
    }
    // Direct summation for a generic gamma.
    double g = 0.95;
    auto disc = discounted_returns(r, g);
    for (std::size_t t = 0; t < r.size(); ++t) {
      double direct = 0.0;
      for (std::size_t i = t; i < r.size(); ++i) direct += std::pow(g, static_cast<double>(i - t)) * r[i];
      REQUIRE(std::abs(disc[t] - direct) <= 1e-12);
    }
  }
}

TEST_CASE("RewardTrace keeps the three arrays aligned") {
  auto trace = RewardTrace::build(str("abd"), str("abc"), 0.5);
  CHECK(trace.step_rewards.size() == 3);
  CHECK(trace.returns.size() == 3);
  CHECK(trace.discount == 0.5);
  CHECK_FALSE(trace.normalized_returns.has_value());
  CHECK(RewardTrace::build(str(""), str("ab"), 0.5).returns.empty());
}

TEST_CASE("normalize_final examples and zero mean") {
  CHECK(normalize_final(std::vector<double>{1, 1, 1}) == std::vector<double>{0, 0, 0});
  auto two = normalize_final(std::vector<double>{-1, 1});
  CHECK(two[0] == -1.0 / (1.0 + kNormEpsilon));
  CHECK(two[1] == 1.0 / (1.0 + kNormEpsilon));
  CHECK_THROWS_AS(normalize_final(std::vector<double>{1}), ContractError);

  std::mt19937_64 rng(26);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int n = 0; n < 200; ++n) {
    std::vector<double> r(2 + rng() % 20);
    for (auto& x : r) x = u(rng);
    auto out = normalize_final(r);
    REQUIRE(std::abs(std::accumulate(out.begin(), out.end(), 0.0)) <= 1e-12);
  }
}

TEST_CASE("MovingStats: fresh, centered and simulated cases") {
  MovingStats fresh;
  CHECK(fresh.mean(0) == 0.0);
  CHECK(fresh.stddev(7) == 1.0);
  auto out = fresh.normalize(std::vector<double>{3.0});
  CHECK(out[0] == 3.0 / (1.0 + kNormEpsilon));

  // Converged to mu = 5 at every slot: constant returns normalize to 0.
  MovingStats five(0.99, {5, 5}, {0, 0});
  auto centered = five.normalize(std::vector<double>{5, 5});
  CHECK(centered == std::vector<double>{0, 0});

  MovingStats sim;
  std::mt19937_64 rng(27);
  std::normal_distribution<double> n(10.0, 2.0);
  for (int k = 0; k < 1000; ++k) sim.update({{n(rng)}, {n(rng)}});
  CHECK(sim.mean(0) >= 9.5);
  CHECK(sim.mean(0) <= 10.5);
  CHECK(sim.stddev(0) > 1.0);
  CHECK(sim.stddev(0) < 3.0);

  CHECK_THROWS_AS(MovingStats(1.0), ConfigError);
}

TEST_CASE("MovingStats update arithmetic and slot growth") {
  MovingStats s(0.5);
  s.update({{2.0, 4.0}, {4.0}});
  // slot 0: mu = 0.5*0 + 0.5*3 = 1.5; var = 0.5*1 + 0.5*mean((2-1.5)^2, (4-1.5)^2) = 0.5 + 1.625
  CHECK(s.slots() == 2);
  CHECK(s.mean(0) == 1.5);
  CHECK(s.variances()[0] == 0.5 + 0.5 * (0.25 + 6.25) / 2.0);
  // slot 1 only saw the first sequence.
  CHECK(s.mean(1) == 2.0);
  CHECK(s.variances()[1] == 0.5 + 0.5 * 4.0);
  // An unseen slot still reads as the initial values.
  CHECK(s.mean(5) == 0.0);
  CHECK(s.stddev(5) == 1.0);
}

TEST_CASE("normalize_timewise uses pre-batch statistics, then updates") {
  MovingStats s(0.9);
  auto out = normalize_timewise({{3.0, 1.0}}, s);
  CHECK(out[0][0] == 3.0 / (1.0 + kNormEpsilon));
  CHECK(out[0][1] == 1.0 / (1.0 + kNormEpsilon));
  CHECK(s.mean(0) == doctest::Approx(0.3).epsilon(1e-15));
}
