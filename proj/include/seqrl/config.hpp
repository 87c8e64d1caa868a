#pragma once

// JSON configuration documents. Unknown keys are rejected so typos surface
// as ConfigError instead of silently falling back to defaults.
//
// {
//   "seed": 1, "learning_rate": 5e-4, "batch_size": 16, "max_epochs": 30,
//   "patience": 5, "eval_beam": 5, "workers": 1, "log_wall_time": false,
//   "model": { "feature_dim": 16, "enc_hidden": 32, "enc_layers": 3,
//              "subsample_layers": 2, "embed_dim": 16, "dec_hidden": 64,
//              "scorer": "mlp", "mlp_hidden": 32, "vocab_size": 9 },
//   "rl":    { "mode": "time_reward", "discount": 0.95, "samples": 15,
//              "rl_weight": 1.0, "normalization": "timewise" },
//   "data":  { "graphemes": 8, "train": 1000, "dev": 100, "test": 100,
//              "min_len": 3, "max_len": 12, "frames_per_symbol": 8,
//              "noise": 0.3, "feature_dim": 16 }
// }
//
// Every key is optional; missing keys keep their defaults.

#include <filesystem>
#include <string>

#include "seqrl/synthtask.hpp"
#include "seqrl/trainer.hpp"

namespace seqrl {

struct DataConfig {
  std::size_t graphemes = 8;
  std::size_t train = 1000;
  std::size_t dev = 100;
  std::size_t test = 100;
  SynthSpec spec;  // `utterances` is ignored; the split sizes above apply

  bool operator==(const DataConfig& o) const;
};

struct RunConfig {
  TrainConfig train;
  DataConfig data;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

// Single-line JSON echo of a training config (checkpoint header). Omits
// `workers`, which does not affect results.
std::string dump_train_config(const TrainConfig& config);
TrainConfig parse_train_config(const std::string& json_text);

}  // namespace seqrl
