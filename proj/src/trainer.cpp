#include "seqrl/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "seqrl/errors.hpp"
#include "seqrl/inference.hpp"

namespace seqrl {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be a finite positive number");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (patience == 0) throw ConfigError("patience must be at least 1");
  if (eval_beam == 0) throw ConfigError("eval_beam must be at least 1");
  if (workers == 0) throw ConfigError("workers must be at least 1");
  model.validate();
  rl.validate();
}

void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  std::size_t threads = std::min(workers, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Adam

void adam_update(ModelParams& params, const Gradients& grads, AdamState& state,
                 const AdamConfig& config) {
  if (grads.size() != params.tensors.size()) {
    throw ContractError("adam_update: gradient set has " + std::to_string(grads.size()) +
                        " entries, parameters " + std::to_string(params.tensors.size()));
  }
  for (const auto& [name, t] : params.tensors) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ContractError("adam_update: no gradient for '" + name + "'");
    if (it->second.size() != t.size()) {
      throw ContractError("adam_update: gradient size mismatch for '" + name + "'");
    }
  }
  ++state.step;
  double t = static_cast<double>(state.step);
  double correct1 = 1.0 - std::pow(config.beta1, t);
  double correct2 = 1.0 - std::pow(config.beta2, t);
  for (auto& [name, tensor] : params.tensors) {
    const auto& g = grads.at(name);
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    m.resize(g.size(), 0.0);
    v.resize(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      double m_hat = m[i] / correct1;
      double v_hat = v[i] / correct2;
      tensor.values[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport evaluate(const Corpus& corpus, const ModelParams& params, const ModelConfig& config,
                    std::size_t beam, std::size_t workers) {
  if (corpus.feature_dim != config.feature_dim) {
    throw SchemaError("corpus feature_dim " + std::to_string(corpus.feature_dim) +
                      " does not match model feature_dim " + std::to_string(config.feature_dim));
  }
  if (corpus.vocab.output_size() != config.vocab_size) {
    throw SchemaError("corpus vocabulary has " + std::to_string(corpus.vocab.output_size()) +
                      " output symbols, model " + std::to_string(config.vocab_size));
  }
  EvalReport report;
  report.rows.resize(corpus.utterances.size());
  parallel_for(corpus.utterances.size(), workers, [&](std::size_t i) {
    const Utterance& u = corpus.utterances[i];
    std::size_t max_len =
        default_max_len(encoded_length(u.features.rows(), config.subsample_layers));
    Hypothesis h = beam == 1 ? greedy_decode(u.features, params, config, max_len)
                             : beam_search(u.features, params, config, beam, max_len);
    EvalRow& row = report.rows[i];
    row.id = u.id;
    row.reference = corpus.vocab.render(u.transcript);
    row.hypothesis = corpus.vocab.render(h.graphemes);
    row.distance = edit_distance(h.graphemes, u.transcript);
    row.reference_length = u.transcript.size();
  });
  for (const auto& row : report.rows) {
    report.errors += row.distance;
    report.reference_symbols += row.reference_length;
  }
  report.cer = report.reference_symbols
                   ? static_cast<double>(report.errors) / static_cast<double>(report.reference_symbols)
                   : 0.0;
  return report;
}

std::string format_eval_report(const EvalReport& report) {
  std::ostringstream os;
  os << "id,reference,hypothesis,distance,reference_length\n";
  for (const auto& r : report.rows) {
    os << r.id << ',' << r.reference << ',' << r.hypothesis << ',' << r.distance << ','
       << r.reference_length << '\n';
  }
  os << "# cer=" << format_double(report.cer) << " errors=" << report.errors
     << " reference_symbols=" << report.reference_symbols << '\n';
  return os.str();
}

std::string format_metrics(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "epoch,phase,train_loss,mean_reward,dev_cer,wall_seconds\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); };
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.phase << ',' << opt(r.train_loss) << ','
       << opt(r.mean_reward) << ',' << format_double(r.dev_cer) << ',' << opt(r.wall_seconds)
       << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Training

namespace {

enum class Phase { mle, rl };

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void check_corpora(const Corpus& train, const Corpus& dev, const ModelConfig& model) {
  if (!(train.vocab == dev.vocab)) throw SchemaError("train and dev vocabularies differ");
  if (train.vocab.output_size() != model.vocab_size) {
    throw SchemaError("corpus vocabulary has " + std::to_string(train.vocab.output_size()) +
                      " output symbols, model vocab_size is " + std::to_string(model.vocab_size));
  }
  for (const Corpus* c : {&train, &dev}) {
    if (c->feature_dim != model.feature_dim) {
      throw SchemaError("corpus feature_dim " + std::to_string(c->feature_dim) +
                        " does not match model feature_dim " + std::to_string(model.feature_dim));
    }
  }
  if (train.utterances.empty() || dev.utterances.empty()) {
    throw InputError("training needs nonempty train and dev corpora");
  }
}

bool all_finite(const ModelParams& params) {
  for (const auto& [_, t] : params.tensors) {
    for (double v : t.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

TrainResult run_phase(Phase phase, const Corpus& train, const Corpus& dev,
                      const TrainConfig& config, const Checkpoint* start,
                      const EpochCallback& on_epoch) {
  config.validate();
  check_corpora(train, dev, config.model);

  Checkpoint cur;
  std::mt19937_64 rng(config.seed);
  if (start) {
    if (!(start->config.model == config.model)) {
      throw SchemaError("checkpoint model config differs from the run's model config");
    }
    start->params.check_matches(config.model);
    cur = *start;
    if (!start->rng_state.empty()) {
      std::istringstream is(start->rng_state);
      is >> rng;
      if (!is) throw SchemaError("checkpoint RNG state is unreadable");
    }
  } else {
    cur.params = ModelParams::init(config.model, splitmix(config.seed));
  }
  cur.config = config;

  const std::string phase_name = phase == Phase::mle ? "mle" : "rl";
  const bool use_rl = phase == Phase::rl;
  const bool track_stats = use_rl && config.rl.mode == RewardMode::time_reward &&
                           config.rl.normalization == Normalization::timewise;
  AdamConfig adam;
  adam.learning_rate = config.learning_rate;

  TrainResult result;
  double best_cer = 0.0;
  bool have_best = false;
  std::size_t stale = 0;
  auto clock_start = std::chrono::steady_clock::now();
  auto elapsed = [&]() -> std::optional<double> {
    if (!config.log_wall_time) return std::nullopt;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  };
  auto log_row = [&](MetricsRow row) {
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  };
  auto dev_cer = [&] { return evaluate(dev, cur.params, config.model, 1, config.workers).cer; };

  if (start) {
    best_cer = dev_cer();
    have_best = true;
    cur.rng_state = rng_text(rng);
    cur.best_dev_cer = best_cer;
    result.best = cur;
    log_row({0, phase_name, std::nullopt, std::nullopt, best_cer, elapsed()});
  }

  std::vector<std::size_t> order(train.utterances.size());
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng() % i]);
    }
    std::size_t phase_epoch = (use_rl ? cur.rl_epochs : cur.mle_epochs) + 1;
    std::uint64_t sample_seed = splitmix(splitmix(config.seed) ^ (use_rl ? 0x51ULL : 0x3eULL) ^
                                         (phase_epoch << 8));

    double loss_total = 0.0;
    double reward_total = 0.0;
    std::size_t reward_count = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      std::vector<UtteranceGradient> parts(b1 - b0);
      parallel_for(parts.size(), config.workers, [&](std::size_t k) {
        std::size_t idx = order[b0 + k];
        const Utterance& u = train.utterances[idx];
        RlStep step{&config.rl, &cur.stats, sample_seed, idx, 0};
        parts[k] = combined_gradient(u.features, u.transcript, cur.params, config.model,
                                     use_rl ? &step : nullptr);
      });

      Gradients total = std::move(parts[0].grads);
      for (std::size_t k = 1; k < parts.size(); ++k) {
        for (auto& [name, g] : total) {
          const auto& gk = parts[k].grads.at(name);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += gk[i];
        }
      }
      double inv = 1.0 / static_cast<double>(parts.size());
      for (auto& [_, g] : total) {
        for (auto& v : g) v *= inv;
      }
      adam_update(cur.params, total, cur.adam, adam);

      std::vector<std::vector<double>> batch_returns;
      for (auto& part : parts) {
        loss_total += part.mle_loss;
        for (double r : part.total_rewards) {
          reward_total += r;
          ++reward_count;
        }
        for (auto& r : part.returns) batch_returns.push_back(std::move(r));
      }
      if (track_stats) cur.stats.update(batch_returns);
    }
    (use_rl ? cur.rl_epochs : cur.mle_epochs) += 1;

    if (!all_finite(cur.params)) {
      throw StateError(phase_name + " epoch " + std::to_string(epoch) +
                       " produced non-finite parameters");
    }
    double cer_now = dev_cer();
    MetricsRow row{epoch, phase_name,
                   std::optional<double>(loss_total / static_cast<double>(order.size())),
                   reward_count ? std::optional<double>(reward_total / static_cast<double>(reward_count))
                                : std::nullopt,
                   cer_now, elapsed()};
    log_row(row);

    if (!have_best || cer_now < best_cer) {
      have_best = true;
      best_cer = cer_now;
      stale = 0;
      cur.rng_state = rng_text(rng);
      cur.best_dev_cer = cer_now;
      result.best = cur;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  if (!have_best) {
    // max_epochs == 0 from scratch: nothing trained, report the initial model.
    cur.rng_state = rng_text(rng);
    cur.best_dev_cer = dev_cer();
    result.best = cur;
  }
  return result;
}

}  // namespace

TrainResult train_mle(const Corpus& train, const Corpus& dev, const TrainConfig& config,
                      const Checkpoint* start, const EpochCallback& on_epoch) {
  return run_phase(Phase::mle, train, dev, config, start, on_epoch);
}

TrainResult train_rl(const Corpus& train, const Corpus& dev, const TrainConfig& config,
                     const Checkpoint& start, const EpochCallback& on_epoch) {
  return run_phase(Phase::rl, train, dev, config, &start, on_epoch);
}

}  // namespace seqrl
