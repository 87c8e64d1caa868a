#pragma once

// Attention encoder-decoder on top of numgrad.
//
// Encoder: linear + LeakyReLU projection, then bidirectional LSTM layers; the
// top `subsample_layers` layers keep only even-index output frames.
// Decoder: one LSTM fed [embed(prev); prev_context]; attention is computed
// from the new hidden state and the output layer reads [h_d; c_t].
//
// Row-vector convention throughout: y = x W + b, with x of shape 1 x in.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "seqrl/numgrad.hpp"
#include "seqrl/types.hpp"

namespace seqrl {

enum class Scorer { dot, bilinear, mlp };

std::string_view scorer_name(Scorer scorer);
Scorer parse_scorer(std::string_view name);

struct ModelConfig {
  std::size_t feature_dim = 16;
  std::size_t enc_hidden = 32;  // per direction
  std::size_t enc_layers = 3;
  std::size_t subsample_layers = 2;
  std::size_t embed_dim = 16;
  std::size_t dec_hidden = 64;
  Scorer scorer = Scorer::mlp;
  std::size_t mlp_hidden = 32;
  std::size_t vocab_size = 9;  // graphemes + eos

  // ConfigError on inconsistent sizes (e.g. dot scorer with 2*enc_hidden != dec_hidden).
  void validate() const;

  std::size_t enc_dim() const { return 2 * enc_hidden; }
  std::size_t proj_dim() const { return 2 * enc_hidden; }
  Symbol eos_id() const { return static_cast<Symbol>(vocab_size - 1); }
  // Input-only id; the embedding table has vocab_size + 1 rows.
  Symbol sos_id() const { return static_cast<Symbol>(vocab_size); }

  bool operator==(const ModelConfig&) const = default;
};

// Output frames after the encoder: ceil-halved once per subsampling layer.
std::size_t encoded_length(std::size_t frames, std::size_t subsample_layers);

using Gradients = std::map<std::string, std::vector<double>>;

// Canonical parameter names and shapes for a config.
std::map<std::string, ng::Shape> parameter_shapes(const ModelConfig& config);

struct ModelParams {
  std::map<std::string, ng::Tensor> tensors;

  // Uniform [-0.08, 0.08] under the seed, LSTM forget-gate biases at 1.0.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& config);

  ng::Tensor& at(const std::string& name);
  const ng::Tensor& at(const std::string& name) const;
  std::size_t scalar_count() const;
  // SchemaError naming the missing / unexpected names or bad shapes.
  void check_matches(const ModelConfig& config) const;
};

// Parameters recorded as tape leaves for one forward/backward pass.
class BoundParams {
 public:
  BoundParams(ng::Tape& tape, const ModelParams& params, bool trainable);

  ng::Var operator[](const std::string& name) const;
  ng::Tape& tape() const { return *tape_; }
  // After backward: gradient per parameter; zeros for parameters the loss
  // never reached.
  Gradients gradients() const;

 private:
  ng::Tape* tape_;
  std::map<std::string, ng::Var> vars_;
};

struct EncoderStates {
  ng::Var states;  // S' x enc_dim
  std::size_t source_length = 0;
  ng::Var mlp_keys;  // S' x mlp_hidden, mlp scorer only

  std::size_t length() const { return states.value().rows(); }
};

struct DecoderState {
  ng::Var h;             // 1 x dec_hidden
  ng::Var c;             // 1 x dec_hidden
  ng::Var prev_context;  // 1 x enc_dim, zero at step 1
  std::size_t step_index = 0;
};

struct Attention {
  ng::Var context;    // 1 x enc_dim
  ng::Var alignment;  // 1 x S'
};

struct StepOutput {
  ng::Var log_probs;  // 1 x vocab_size
  ng::Var alignment;
  DecoderState state;
};

EncoderStates encode(const BoundParams& params, const ModelConfig& config,
                     const ng::Tensor& features);

// Score of one encoder state against one decoder state.
ng::Var attention_score(const BoundParams& params, const ModelConfig& config, ng::Var h_e,
                        ng::Var h_d);

Attention attend(const BoundParams& params, const ModelConfig& config,
                 const EncoderStates& enc, ng::Var h_d);

DecoderState initial_state(const BoundParams& params, const ModelConfig& config);

StepOutput decode_step(const BoundParams& params, const ModelConfig& config,
                       const EncoderStates& enc, Symbol prev, const DecoderState& state);

// Teacher-forced log P(y_t | y_<t, x) for each emitted symbol, conditioning
// step 1 on sos. `emitted` may or may not end with eos.
std::vector<ng::Var> score_emissions(const BoundParams& params, const ModelConfig& config,
                                     const EncoderStates& enc,
                                     std::span<const Symbol> emitted);

struct SequenceLogProb {
  ng::Var total;
  std::vector<ng::Var> per_step_vars;
  std::vector<double> per_step;
};

// Teacher-forced pass over a transcript that ends with eos.
SequenceLogProb sequence_log_prob(const BoundParams& params, const ModelConfig& config,
                                  const ng::Tensor& features, std::span<const Symbol> transcript);

}  // namespace seqrl
