#include "seqrl/objectives.hpp"

#include "seqrl/errors.hpp"

namespace seqrl {

using ng::Var;

std::string_view reward_mode_name(RewardMode mode) {
  return mode == RewardMode::final_reward ? "final_reward" : "time_reward";
}

RewardMode parse_reward_mode(std::string_view name) {
  if (name == "final_reward") return RewardMode::final_reward;
  if (name == "time_reward") return RewardMode::time_reward;
  throw ConfigError("unknown reward mode '" + std::string(name) + "'");
}

std::string_view normalization_name(Normalization n) {
  switch (n) {
    case Normalization::timewise: return "timewise";
    case Normalization::across_samples: return "across_samples";
    case Normalization::none: return "none";
  }
  return "?";
}

Normalization parse_normalization(std::string_view name) {
  if (name == "timewise") return Normalization::timewise;
  if (name == "across_samples") return Normalization::across_samples;
  if (name == "none") return Normalization::none;
  throw ConfigError("unknown normalization '" + std::string(name) + "'");
}

void RlConfig::validate() const {
  if (!(discount >= 0.0 && discount <= 1.0)) throw ConfigError("rl.discount must lie in [0, 1]");
  if (samples == 0) throw ConfigError("rl.samples must be at least 1");
  if (!(rl_weight >= 0.0)) throw ConfigError("rl.rl_weight must be nonnegative");
  if (mode == RewardMode::final_reward && normalization == Normalization::timewise) {
    throw ConfigError("final_reward pairs with across_samples (or none) normalization");
  }
  if (mode == RewardMode::time_reward && normalization == Normalization::across_samples) {
    throw ConfigError("time_reward pairs with timewise (or none) normalization");
  }
  if (mode == RewardMode::final_reward && normalization == Normalization::across_samples &&
      samples < 2) {
    throw ConfigError("across_samples normalization needs rl.samples >= 2");
  }
}

Var mle_loss(std::span<const Var> per_step, std::span<const Symbol> transcript) {
  if (per_step.size() != transcript.size() + 1) {
    throw ContractError("mle_loss: " + std::to_string(per_step.size()) +
                        " step log-probs for a transcript of " +
                        std::to_string(transcript.size()) + " graphemes plus eos");
  }
  return ng::scale(ng::sum(ng::stack_rows(per_step)), -1.0);
}

std::vector<double> sample_returns(const Hypothesis& hyp, std::span<const Symbol> ref,
                                   double discount) {
  auto trace = RewardTrace::build(hyp.graphemes, ref, discount);
  std::vector<double> out = std::move(trace.returns);
  if (!hyp.truncated) out.push_back(0.0);
  return out;
}

double total_reward(const Hypothesis& hyp, std::span<const Symbol> ref) {
  if (ref.empty()) throw ContractError("total_reward: empty reference");
  return static_cast<double>(ref.size()) -
         static_cast<double>(edit_distance(hyp.graphemes, ref));
}

Surrogate policy_surrogate(ng::Tape& tape, std::span<const TapedSample> samples,
                           const std::vector<std::vector<double>>& coefficients) {
  if (samples.empty()) throw ContractError("policy surrogate over an empty batch");
  if (coefficients.size() != samples.size()) {
    throw ContractError("one coefficient row per sample required");
  }
  Surrogate out;
  std::vector<Var> per_sample;
  for (std::size_t m = 0; m < samples.size(); ++m) {
    const auto& steps = samples[m].step_log_probs;
    if (coefficients[m].size() != steps.size()) {
      throw ContractError("sample " + std::to_string(m) + ": " +
                          std::to_string(coefficients[m].size()) + " coefficients for " +
                          std::to_string(steps.size()) + " steps");
    }
    Var coef = tape.constant(ng::Tensor({steps.size(), 1}, coefficients[m]));
    out.coefficients.push_back(coef);
    per_sample.push_back(ng::sum(ng::mul(ng::stack_rows(steps), coef)));
  }
  out.value = ng::scale(ng::sum(ng::stack_rows(per_sample)),
                        1.0 / static_cast<double>(samples.size()));
  return out;
}

RlTerm reinforce_time(ng::Tape& tape, std::span<const TapedSample> samples,
                      std::span<const Symbol> ref, double discount, const MovingStats* stats) {
  if (samples.empty()) throw ContractError("reinforce_time: empty batch");
  RlTerm term;
  std::vector<std::vector<double>> coefficients;
  for (const auto& s : samples) {
    auto returns = sample_returns(s.hyp, ref, discount);
    coefficients.push_back(stats ? stats->normalize(returns) : returns);
    term.returns.push_back(std::move(returns));
    term.total_rewards.push_back(total_reward(s.hyp, ref));
  }
  term.surrogate = policy_surrogate(tape, samples, coefficients);
  return term;
}

RlTerm reinforce_final(ng::Tape& tape, std::span<const TapedSample> samples,
                       std::span<const Symbol> ref, bool normalize) {
  if (samples.empty()) throw ContractError("reinforce_final: empty batch");
  if (normalize && samples.size() < 2) {
    throw ContractError("reinforce_final: normalization across samples needs M >= 2");
  }
  RlTerm term;
  for (const auto& s : samples) term.total_rewards.push_back(total_reward(s.hyp, ref));
  std::vector<double> weights =
      normalize ? normalize_final(term.total_rewards) : term.total_rewards;
  std::vector<std::vector<double>> coefficients;
  for (std::size_t m = 0; m < samples.size(); ++m) {
    coefficients.emplace_back(samples[m].step_log_probs.size(), weights[m]);
  }
  term.surrogate = policy_surrogate(tape, samples, coefficients);
  return term;
}

UtteranceGradient combined_gradient(const ng::Tensor& features, std::span<const Symbol> transcript,
                                    const ModelParams& params, const ModelConfig& config,
                                    const RlStep* rl) {
  if (transcript.empty()) throw ContractError("combined_gradient: empty transcript");
  ng::Tape tape;
  BoundParams bound(tape, params, true);
  EncoderStates enc = encode(bound, config, features);

  Transcript target(transcript.begin(), transcript.end());
  target.push_back(config.eos_id());
  auto steps = score_emissions(bound, config, enc, target);
  Var loss = mle_loss(steps, transcript);

  UtteranceGradient out;
  out.mle_loss = loss.item();

  if (rl && rl->config->rl_weight != 0.0) {
    const RlConfig& rc = *rl->config;
    std::size_t max_len = rl->max_len ? rl->max_len : default_max_len(enc.length());
    auto samples =
        sample_on_tape(bound, config, enc, rc.samples, max_len, rl->seed, rl->utterance_index);
    RlTerm term;
    if (rc.mode == RewardMode::time_reward) {
      const MovingStats* stats = rc.normalization == Normalization::timewise ? rl->stats : nullptr;
      if (rc.normalization == Normalization::timewise && !stats) {
        throw ContractError("timewise normalization requires moving statistics");
      }
      term = reinforce_time(tape, samples, transcript, rc.discount, stats);
    } else {
      term = reinforce_final(tape, samples, transcript,
                             rc.normalization == Normalization::across_samples);
    }
    loss = ng::add(loss, ng::scale(term.surrogate.value, -rc.rl_weight));
    out.returns = std::move(term.returns);
    out.total_rewards = std::move(term.total_rewards);
  }

  tape.backward(loss);
  out.grads = bound.gradients();
  return out;
}

}  // namespace seqrl
