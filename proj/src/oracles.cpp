#include "seqrl/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "seqrl/editdist.hpp"
#include "seqrl/errors.hpp"

namespace seqrl::oracle {

using ng::Var;

ModelConfig tiny_config(Scorer scorer) {
  ModelConfig c;
  c.feature_dim = 3;
  c.enc_hidden = 4;
  c.enc_layers = 2;
  c.subsample_layers = 1;
  c.embed_dim = 3;
  c.dec_hidden = 8;
  c.scorer = scorer;
  c.mlp_hidden = 4;
  c.vocab_size = 3;
  c.validate();
  return c;
}

ModelParams random_params(const ModelConfig& config, std::uint64_t seed, double scale) {
  ModelParams p = ModelParams::zeros(config);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& [name, t] : p.tensors) {
    for (auto& v : t.values) v = u(rng);
  }
  return p;
}

ng::Tensor random_features(std::size_t frames, std::size_t feature_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> values(frames * feature_dim);
  for (auto& v : values) v = n(rng);
  return ng::Tensor({frames, feature_dim}, std::move(values));
}

namespace {

// Depth-first walk over the output tree. visit(emitted, step_vars, ended)
// fires at each leaf; emitted excludes eos.
void walk(const BoundParams& bound, const ModelConfig& config, const EncoderStates& enc,
          std::size_t max_len,
          const std::function<void(const Transcript&, const std::vector<Var>&, bool)>& visit) {
  const Symbol eos = config.eos_id();
  Transcript emitted;
  std::vector<Var> steps;
  std::function<void(Symbol, const DecoderState&)> rec = [&](Symbol prev,
                                                             const DecoderState& state) {
    StepOutput out = decode_step(bound, config, enc, prev, state);
    for (Symbol y = 0; y <= eos; ++y) {
      steps.push_back(ng::pick(out.log_probs, static_cast<std::size_t>(y)));
      if (y == eos) {
        visit(emitted, steps, true);
      } else {
        emitted.push_back(y);
        if (emitted.size() == max_len) {
          visit(emitted, steps, false);
        } else {
          rec(y, out.state);
        }
        emitted.pop_back();
      }
      steps.pop_back();
    }
  };
  rec(config.sos_id(), initial_state(bound, config));
}

std::vector<double> values_of(const std::vector<Var>& steps) {
  std::vector<double> out;
  for (const auto& v : steps) out.push_back(v.item());
  return out;
}

}  // namespace

std::vector<Outcome> enumerate_outcomes(const ng::Tensor& features, const ModelParams& params,
                                        const ModelConfig& config, std::size_t max_len) {
  if (max_len == 0) throw ContractError("max_len must be at least 1");
  ng::Tape tape;
  BoundParams bound(tape, params, false);
  EncoderStates enc = encode(bound, config, features);
  std::vector<Outcome> out;
  walk(bound, config, enc, max_len,
       [&](const Transcript& emitted, const std::vector<Var>& steps, bool ended) {
         Outcome o;
         o.hyp = Hypothesis::make(emitted, values_of(steps), !ended);
         o.probability = std::exp(o.hyp.total_log_prob);
         out.push_back(std::move(o));
       });
  return out;
}

Hypothesis exhaustive_best(const ng::Tensor& features, const ModelParams& params,
                           const ModelConfig& config, std::size_t max_len) {
  auto all = enumerate_outcomes(features, params, config, max_len);
  const Hypothesis* best = nullptr;
  for (const auto& o : all) {
    const Hypothesis& h = o.hyp;
    if (!best || h.normalized_score > best->normalized_score ||
        (h.normalized_score == best->normalized_score && h.graphemes < best->graphemes)) {
      best = &h;
    }
  }
  return *best;
}

Gradients expected_estimator(const ng::Tensor& features, const ModelParams& params,
                             const ModelConfig& config, std::span<const Symbol> ref,
                             std::size_t max_len, Estimator estimator, double discount) {
  if (max_len == 0) throw ContractError("max_len must be at least 1");
  ng::Tape tape;
  BoundParams bound(tape, params, true);
  EncoderStates enc = encode(bound, config, features);

  // Objective whose gradient is the expectation: sum_y P(y) sum_t c_t(y) log P_t,
  // with P(y) and c_t(y) held constant.
  std::vector<Var> terms;
  walk(bound, config, enc, max_len,
       [&](const Transcript& emitted, const std::vector<Var>& steps, bool ended) {
         double log_p = 0.0;
         for (const auto& v : steps) log_p += v.item();
         double p = std::exp(log_p);
         std::vector<double> coef(steps.size());
         if (estimator == Estimator::global_reward) {
           double reward = static_cast<double>(ref.size()) -
                           static_cast<double>(edit_distance(emitted, ref));
           std::fill(coef.begin(), coef.end(), reward);
         } else {
           // Returns over grapheme steps; the eos step (when present) has none.
           std::vector<double> returns;
           if (!emitted.empty()) returns = discounted_returns(step_rewards(emitted, ref), discount);
           std::copy(returns.begin(), returns.end(), coef.begin());
           if (ended) coef.back() = 0.0;
         }
         Var c = tape.constant(ng::Tensor({steps.size(), 1}, coef));
         terms.push_back(ng::scale(ng::sum(ng::mul(ng::stack_rows(steps), c)), p));
       });
  std::vector<Var> rows;
  for (const auto& t : terms) rows.push_back(ng::reshape(t, {1}));
  Var objective = ng::sum(ng::stack_rows(rows));
  tape.backward(objective);
  return bound.gradients();
}

double max_abs_difference(const Gradients& a, const Gradients& b) {
  if (a.size() != b.size()) throw ContractError("gradient sets differ in size");
  double worst = 0.0;
  for (const auto& [name, va] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.size() != va.size()) {
      throw ContractError("gradient sets differ at '" + name + "'");
    }
    for (std::size_t i = 0; i < va.size(); ++i) {
      worst = std::max(worst, std::abs(va[i] - it->second[i]));
    }
  }
  return worst;
}

namespace {

double mle_value(const ng::Tensor& features, const ModelParams& params, const ModelConfig& config,
                 std::span<const Symbol> with_eos) {
  ng::Tape tape;
  BoundParams bound(tape, params, false);
  return -sequence_log_prob(bound, config, features, with_eos).total.item();
}

}  // namespace

FdReport check_mle_gradients(const ng::Tensor& features, const ModelParams& params,
                             const ModelConfig& config, std::span<const Symbol> transcript,
                             double h, double floor) {
  Transcript with_eos(transcript.begin(), transcript.end());
  with_eos.push_back(config.eos_id());

  ng::Tape tape;
  BoundParams bound(tape, params, true);
  auto seq = sequence_log_prob(bound, config, features, with_eos);
  tape.backward(mle_loss(seq.per_step_vars, transcript));
  Gradients analytic = bound.gradients();

  FdReport report;
  ModelParams probe = params;
  for (auto& [name, tensor] : probe.tensors) {
    FdEntry entry;
    entry.name = name;
    double diff_sq = 0.0, grad_sq = 0.0;
    for (std::size_t i = 0; i < tensor.values.size(); ++i) {
      double saved = tensor.values[i];
      tensor.values[i] = saved + h;
      double up = mle_value(features, probe, config, with_eos);
      tensor.values[i] = saved - h;
      double down = mle_value(features, probe, config, with_eos);
      tensor.values[i] = saved;
      double numeric = (up - down) / (2.0 * h);
      double a = analytic.at(name)[i];
      double abs_err = std::abs(a - numeric);
      double rel = abs_err / std::max(std::abs(a), floor);
      diff_sq += abs_err * abs_err;
      grad_sq += a * a;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > entry.worst_scalar_error || i == 0) {
        entry.worst_index = i;
        entry.worst_analytic = a;
        entry.worst_numeric = numeric;
        entry.worst_scalar_error = rel;
      }
      ++report.checked;
    }
    entry.grad_norm = std::sqrt(grad_sq);
    entry.rel_error = std::sqrt(diff_sq) / std::max(entry.grad_norm, floor);
    report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    report.max_scalar_error = std::max(report.max_scalar_error, entry.worst_scalar_error);
    report.parameters.push_back(entry);
  }
  return report;
}

McReport monte_carlo_check(const ng::Tensor& features, const ModelParams& params,
                           const ModelConfig& config, std::span<const Symbol> ref,
                           std::size_t max_len, std::size_t batches, std::size_t samples,
                           std::uint64_t seed) {
  if (batches < 2) throw ContractError("monte_carlo_check needs at least 2 batches");
  Gradients exact =
      expected_estimator(features, params, config, ref, max_len, Estimator::global_reward, 1.0);
  Gradients sum, sum_sq;
  for (const auto& [name, g] : exact) {
    sum[name].assign(g.size(), 0.0);
    sum_sq[name].assign(g.size(), 0.0);
  }
  for (std::size_t b = 0; b < batches; ++b) {
    ng::Tape tape;
    BoundParams bound(tape, params, true);
    EncoderStates enc = encode(bound, config, features);
    auto drawn = sample_on_tape(bound, config, enc, samples, max_len, seed, b);
    auto term = reinforce_final(tape, drawn, ref, false);
    tape.backward(term.surrogate.value);
    for (const auto& [name, g] : bound.gradients()) {
      auto& s = sum[name];
      auto& q = sum_sq[name];
      for (std::size_t i = 0; i < g.size(); ++i) {
        s[i] += g[i];
        q[i] += g[i] * g[i];
      }
    }
  }

  McReport report;
  report.batches = batches;
  auto n = static_cast<double>(batches);
  for (const auto& [name, g] : exact) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      double mean = sum[name][i] / n;
      double var = std::max(0.0, (sum_sq[name][i] - n * mean * mean) / (n - 1.0));
      double se = std::sqrt(var / n);
      double diff = std::abs(mean - g[i]);
      ++report.components;
      if (se == 0.0) {
        bool ok = diff <= 1e-12;
        report.within_3se += ok;
        report.within_5se += ok;
        continue;
      }
      double z = diff / se;
      report.max_abs_z = std::max(report.max_abs_z, z);
      report.within_3se += z <= 3.0;
      report.within_5se += z <= 5.0;
    }
  }
  return report;
}

}  // namespace seqrl::oracle
