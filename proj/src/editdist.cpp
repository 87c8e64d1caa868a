#include "seqrl/editdist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "seqrl/errors.hpp"

namespace seqrl {

namespace {

// Advances one DP row: prev holds distances of hyp[0..i-1] against every ref
// prefix, cur receives hyp[0..i].
void dp_row(Symbol h, std::span<const Symbol> ref, const std::vector<std::size_t>& prev,
            std::vector<std::size_t>& cur) {
  cur[0] = prev[0] + 1;
  for (std::size_t j = 1; j <= ref.size(); ++j) {
    std::size_t sub = prev[j - 1] + (h == ref[j - 1] ? 0 : 1);
    cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
  }
}

}  // namespace

std::size_t edit_distance(std::span<const Symbol> a, std::span<const Symbol> b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (Symbol s : a) {
    dp_row(s, b, prev, cur);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::size_t> prefix_edit_distances(std::span<const Symbol> hyp,
                                               std::span<const Symbol> ref) {
  if (hyp.empty()) throw ContractError("prefix_edit_distances: empty hypothesis");
  std::vector<std::size_t> prev(ref.size() + 1), cur(ref.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  std::vector<std::size_t> out;
  out.reserve(hyp.size());
  for (Symbol s : hyp) {
    dp_row(s, ref, prev, cur);
    out.push_back(cur[ref.size()]);
    std::swap(prev, cur);
  }
  return out;
}

std::vector<double> step_rewards(std::span<const Symbol> hyp, std::span<const Symbol> ref) {
  if (ref.empty()) throw ContractError("step_rewards: empty reference");
  if (hyp.empty()) throw ContractError("step_rewards: empty hypothesis");
  auto dist = prefix_edit_distances(hyp, ref);
  std::vector<double> r(dist.size());
  // Integer differences first so the telescoping sum stays exact.
  auto previous = static_cast<long long>(ref.size());
  for (std::size_t t = 0; t < dist.size(); ++t) {
    auto d = static_cast<long long>(dist[t]);
    r[t] = static_cast<double>(previous - d);
    previous = d;
  }
  return r;
}

std::vector<double> discounted_returns(std::span<const double> rewards, double discount) {
  if (!(discount >= 0.0 && discount <= 1.0)) {
    throw ContractError("discount must lie in [0, 1], got " + std::to_string(discount));
  }
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    running = rewards[t] + discount * running;
    out[t] = running;
  }
  return out;
}

RewardTrace RewardTrace::build(std::span<const Symbol> hyp, std::span<const Symbol> ref,
                               double discount) {
  RewardTrace trace;
  trace.discount = discount;
  if (!hyp.empty()) {
    trace.step_rewards = seqrl::step_rewards(hyp, ref);
    trace.returns = seqrl::discounted_returns(trace.step_rewards, discount);
  } else if (ref.empty()) {
    throw ContractError("RewardTrace: empty reference");
  }
  return trace;
}

// ---------------------------------------------------------------------------

MovingStats::MovingStats(double decay) : decay_(decay) {
  if (!(decay >= 0.0 && decay < 1.0)) {
    throw ConfigError("moving-stat decay must lie in [0, 1)");
  }
}

MovingStats::MovingStats(double decay, std::vector<double> means,
                         std::vector<double> variances)
    : MovingStats(decay) {
  if (means.size() != variances.size()) {
    throw SchemaError("moving stats: mean/variance slot counts differ");
  }
  means_ = std::move(means);
  variances_ = std::move(variances);
}

double MovingStats::mean(std::size_t t) const { return t < means_.size() ? means_[t] : 0.0; }

double MovingStats::stddev(std::size_t t) const {
  return t < variances_.size() ? std::sqrt(variances_[t]) : 1.0;
}

void MovingStats::grow(std::size_t n) {
  if (n > means_.size()) {
    means_.resize(n, 0.0);
    variances_.resize(n, 1.0);
  }
}

std::vector<double> MovingStats::normalize(std::span<const double> returns) const {
  std::vector<double> out(returns.size());
  for (std::size_t t = 0; t < returns.size(); ++t) {
    out[t] = (returns[t] - mean(t)) / (stddev(t) + kNormEpsilon);
  }
  return out;
}

void MovingStats::update(const std::vector<std::vector<double>>& batch) {
  std::size_t longest = 0;
  for (const auto& seq : batch) longest = std::max(longest, seq.size());
  grow(longest);
  for (std::size_t t = 0; t < longest; ++t) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& seq : batch) {
      if (t < seq.size()) {
        total += seq[t];
        ++n;
      }
    }
    double mu = decay_ * means_[t] + (1.0 - decay_) * (total / static_cast<double>(n));
    double sq = 0.0;
    for (const auto& seq : batch) {
      if (t < seq.size()) sq += (seq[t] - mu) * (seq[t] - mu);
    }
    means_[t] = mu;
    variances_[t] = decay_ * variances_[t] + (1.0 - decay_) * (sq / static_cast<double>(n));
  }
}

std::vector<std::vector<double>> normalize_timewise(
    const std::vector<std::vector<double>>& batch, MovingStats& stats) {
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const auto& seq : batch) out.push_back(stats.normalize(seq));
  stats.update(batch);
  return out;
}

std::vector<double> normalize_final(std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw ContractError("normalize_final needs at least two samples");
  }
  double n = static_cast<double>(rewards.size());
  double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  double denom = std::sqrt(var / n) + kNormEpsilon;
  std::vector<double> out(rewards.size());
  for (std::size_t m = 0; m < rewards.size(); ++m) out[m] = (rewards[m] - mean) / denom;
  return out;
}

}  // namespace seqrl
