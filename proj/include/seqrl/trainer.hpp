#pragma once

// Adam, the two training phases (MLE, then MLE + RL), evaluation and
// checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "seqrl/editdist.hpp"
#include "seqrl/objectives.hpp"
#include "seqrl/seq2seq.hpp"
#include "seqrl/synthtask.hpp"

namespace seqrl {

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 30;  // per phase
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  std::size_t eval_beam = 5;
  std::size_t workers = 1;
  bool log_wall_time = false;  // off keeps metrics logs byte-reproducible
  RlConfig rl;
  ModelConfig model;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  Gradients first_moment;
  Gradients second_moment;
};

// Bias-corrected Adam step. ContractError unless grads and params carry the
// same names and sizes.
void adam_update(ModelParams& params, const Gradients& grads, AdamState& state,
                 const AdamConfig& config);

// ---------------------------------------------------------------------------

struct Checkpoint {
  TrainConfig config;
  ModelParams params;
  AdamState adam;
  MovingStats stats;
  std::size_t mle_epochs = 0;
  std::size_t rl_epochs = 0;
  double best_dev_cer = 1.0;
  std::string rng_state;  // std::mt19937_64 text state
};

std::string format_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct MetricsRow {
  std::size_t epoch = 0;
  std::string phase;
  std::optional<double> train_loss;
  std::optional<double> mean_reward;
  double dev_cer = 0.0;
  std::optional<double> wall_seconds;
};

std::string format_metrics(const std::vector<MetricsRow>& rows);

struct TrainResult {
  Checkpoint best;                 // best dev CER seen (epoch 0 = start point)
  std::vector<MetricsRow> log;
};

// Called after every logged epoch; lets the CLI print progress.
using EpochCallback = std::function<void(const MetricsRow&)>;

// Teacher-forced training with dev-CER early stopping. From scratch the first
// epoch sets the baseline; from `start` its dev CER is logged as epoch 0.
TrainResult train_mle(const Corpus& train, const Corpus& dev, const TrainConfig& config,
                      const Checkpoint* start = nullptr, const EpochCallback& on_epoch = {});

// MLE + rl_weight * REINFORCE, continuing from `start`.
TrainResult train_rl(const Corpus& train, const Corpus& dev, const TrainConfig& config,
                     const Checkpoint& start, const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------

struct EvalRow {
  std::string id;
  std::string reference;
  std::string hypothesis;
  std::size_t distance = 0;
  std::size_t reference_length = 0;
};

struct EvalReport {
  double cer = 0.0;  // pooled: sum of distances / sum of reference lengths
  std::size_t errors = 0;
  std::size_t reference_symbols = 0;
  std::vector<EvalRow> rows;
};

// beam == 1 is greedy decoding.
EvalReport evaluate(const Corpus& corpus, const ModelParams& params, const ModelConfig& config,
                    std::size_t beam, std::size_t workers = 1);

std::string format_eval_report(const EvalReport& report);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written to per-index slots; callers reduce in index order.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace seqrl
