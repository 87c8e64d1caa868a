#include "seqrl/seq2seq.hpp"

#include <random>

#include "seqrl/errors.hpp"

namespace seqrl {

using ng::Shape;
using ng::Tensor;
using ng::Var;

std::string_view scorer_name(Scorer scorer) {
  switch (scorer) {
    case Scorer::dot: return "dot";
    case Scorer::bilinear: return "bilinear";
    case Scorer::mlp: return "mlp";
  }
  return "?";
}

Scorer parse_scorer(std::string_view name) {
  if (name == "dot") return Scorer::dot;
  if (name == "bilinear") return Scorer::bilinear;
  if (name == "mlp") return Scorer::mlp;
  throw ConfigError("unknown scorer '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string(what) + " must be positive");
  };
  positive(feature_dim, "feature_dim");
  positive(enc_hidden, "enc_hidden");
  positive(enc_layers, "enc_layers");
  positive(embed_dim, "embed_dim");
  positive(dec_hidden, "dec_hidden");
  if (scorer == Scorer::mlp) positive(mlp_hidden, "mlp_hidden");
  if (vocab_size < 2) throw ConfigError("vocab_size must cover at least one grapheme and eos");
  if (subsample_layers + 1 > enc_layers) {
    throw ConfigError("subsample_layers must be at most enc_layers - 1");
  }
  if (scorer == Scorer::dot && enc_dim() != dec_hidden) {
    throw ConfigError("dot scorer needs 2*enc_hidden == dec_hidden (" +
                      std::to_string(enc_dim()) + " vs " + std::to_string(dec_hidden) + ")");
  }
}

std::size_t encoded_length(std::size_t frames, std::size_t subsample_layers) {
  for (std::size_t k = 0; k < subsample_layers; ++k) frames = (frames + 1) / 2;
  return frames;
}

namespace {

std::string layer_prefix(std::size_t layer, bool backward) {
  return "enc.l" + std::to_string(layer) + (backward ? ".bwd" : ".fwd");
}

bool is_forget_bias(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0 &&
         (name.rfind("enc.l", 0) == 0 || name.rfind("dec.lstm", 0) == 0);
}

}  // namespace

std::map<std::string, Shape> parameter_shapes(const ModelConfig& c) {
  c.validate();
  std::map<std::string, Shape> shapes;
  shapes["enc.proj.W"] = {c.feature_dim, c.proj_dim()};
  shapes["enc.proj.b"] = {1, c.proj_dim()};
  for (std::size_t l = 0; l < c.enc_layers; ++l) {
    std::size_t in = l == 0 ? c.proj_dim() : c.enc_dim();
    for (bool bwd : {false, true}) {
      auto p = layer_prefix(l, bwd);
      shapes[p + ".w_ih"] = {in, 4 * c.enc_hidden};
      shapes[p + ".w_hh"] = {c.enc_hidden, 4 * c.enc_hidden};
      shapes[p + ".b"] = {1, 4 * c.enc_hidden};
    }
  }
  switch (c.scorer) {
    case Scorer::dot:
      break;
    case Scorer::bilinear:
      shapes["att.bilinear.W"] = {c.enc_dim(), c.dec_hidden};
      break;
    case Scorer::mlp:
      shapes["att.mlp.W_enc"] = {c.enc_dim(), c.mlp_hidden};
      shapes["att.mlp.W_dec"] = {c.dec_hidden, c.mlp_hidden};
      shapes["att.mlp.V"] = {c.mlp_hidden, 1};
      break;
  }
  shapes["dec.embed"] = {c.vocab_size + 1, c.embed_dim};
  shapes["dec.lstm.w_ih"] = {c.embed_dim + c.enc_dim(), 4 * c.dec_hidden};
  shapes["dec.lstm.w_hh"] = {c.dec_hidden, 4 * c.dec_hidden};
  shapes["dec.lstm.b"] = {1, 4 * c.dec_hidden};
  shapes["dec.out.W"] = {c.dec_hidden + c.enc_dim(), c.vocab_size};
  shapes["dec.out.b"] = {1, c.vocab_size};
  return shapes;
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  ModelParams p;
  for (auto& [name, shape] : parameter_shapes(config)) {
    p.tensors.emplace(name, Tensor::zeros(shape, true));
  }
  return p;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zeros(config);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-0.08, 0.08);
  for (auto& [name, t] : p.tensors) {
    for (auto& v : t.values) v = uni(rng);
    if (is_forget_bias(name)) {
      std::size_t h = t.cols() / 4;
      for (std::size_t j = h; j < 2 * h; ++j) t.values[j] = 1.0;
    }
  }
  return p;
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw SchemaError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw SchemaError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors) n += t.size();
  return n;
}

void ModelParams::check_matches(const ModelConfig& config) const {
  auto shapes = parameter_shapes(config);
  std::string missing, extra, bad;
  for (const auto& [name, shape] : shapes) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      missing += " " + name;
    } else if (it->second.shape != shape) {
      bad += " " + name + ng::shape_str(it->second.shape) + "!=" + ng::shape_str(shape);
    }
  }
  for (const auto& [name, _] : tensors) {
    if (!shapes.count(name)) extra += " " + name;
  }
  if (!missing.empty() || !extra.empty() || !bad.empty()) {
    std::string msg = "parameter set does not match model config;";
    if (!missing.empty()) msg += " missing:" + missing + ";";
    if (!extra.empty()) msg += " unexpected:" + extra + ";";
    if (!bad.empty()) msg += " shape:" + bad + ";";
    throw SchemaError(msg);
  }
}

BoundParams::BoundParams(ng::Tape& tape, const ModelParams& params, bool trainable)
    : tape_(&tape) {
  for (const auto& [name, t] : params.tensors) {
    Tensor copy(t.shape, t.values, trainable);
    vars_.emplace(name, tape.leaf(std::move(copy)));
  }
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw SchemaError("parameter '" + name + "' not bound");
  return it->second;
}

Gradients BoundParams::gradients() const {
  Gradients out;
  for (const auto& [name, v] : vars_) {
    if (tape_->has_grad(v)) {
      out.emplace(name, tape_->grad(v));
    } else {
      out.emplace(name, std::vector<double>(v.value().size(), 0.0));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct LstmState {
  Var h, c;
};

// Gate layout along columns: input, forget, cell, output.
LstmState lstm_cell(Var gates, Var c_prev, std::size_t hidden) {
  Var i = ng::sigmoid(ng::slice_cols(gates, 0, hidden));
  Var f = ng::sigmoid(ng::slice_cols(gates, hidden, hidden));
  Var g = ng::tanh(ng::slice_cols(gates, 2 * hidden, hidden));
  Var o = ng::sigmoid(ng::slice_cols(gates, 3 * hidden, hidden));
  Var c = ng::add(ng::mul(f, c_prev), ng::mul(i, g));
  Var h = ng::mul(o, ng::tanh(c));
  return {h, c};
}

Var zeros_row(ng::Tape& tape, std::size_t n) {
  return tape.constant(Tensor::zeros({1, n}));
}

// One direction over all frames of `input` (S x in); returns S x hidden in
// original time order.
Var run_direction(const BoundParams& p, const std::string& prefix, Var input,
                  std::size_t hidden, bool backward) {
  ng::Tape& tape = p.tape();
  std::size_t frames = input.value().rows();
  Var projected = ng::add_row(ng::matmul(input, p[prefix + ".w_ih"]), p[prefix + ".b"]);
  Var w_hh = p[prefix + ".w_hh"];
  LstmState state{zeros_row(tape, hidden), zeros_row(tape, hidden)};
  std::vector<Var> outputs(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    std::size_t t = backward ? frames - 1 - k : k;
    Var gates = ng::gather_rows(projected, std::span<const std::size_t>(&t, 1));
    gates = ng::add(gates, ng::matmul(state.h, w_hh));
    state = lstm_cell(gates, state.c, hidden);
    outputs[t] = state.h;
  }
  return ng::stack_rows(outputs);
}

}  // namespace

EncoderStates encode(const BoundParams& p, const ModelConfig& config,
                     const Tensor& features) {
  if (features.shape.size() != 2 || features.cols() != config.feature_dim) {
    throw DimensionError("encode: features " + ng::shape_str(features.shape) +
                         " do not have " + std::to_string(config.feature_dim) + " columns");
  }
  std::size_t frames = features.rows();
  std::size_t min_frames = std::size_t{1} << config.subsample_layers;
  if (frames < min_frames) {
    throw InputError("encode: " + std::to_string(frames) + " frames cannot be subsampled " +
                     std::to_string(config.subsample_layers) + " times");
  }
  ng::Tape& tape = p.tape();
  Var x = tape.constant(Tensor(features.shape, features.values));
  x = ng::leaky_relu(ng::add_row(ng::matmul(x, p["enc.proj.W"]), p["enc.proj.b"]));

  for (std::size_t l = 0; l < config.enc_layers; ++l) {
    Var fwd = run_direction(p, layer_prefix(l, false), x, config.enc_hidden, false);
    Var bwd = run_direction(p, layer_prefix(l, true), x, config.enc_hidden, true);
    x = ng::concat_cols(fwd, bwd);
    if (l + config.subsample_layers >= config.enc_layers) {
      std::size_t rows = x.value().rows();
      std::vector<std::size_t> keep;
      for (std::size_t t = 0; t < rows; t += 2) keep.push_back(t);
      x = ng::gather_rows(x, keep);
    }
  }

  EncoderStates enc;
  enc.states = x;
  enc.source_length = frames;
  if (config.scorer == Scorer::mlp) enc.mlp_keys = ng::matmul(x, p["att.mlp.W_enc"]);
  return enc;
}

Var attention_score(const BoundParams& p, const ModelConfig& config, Var h_e, Var h_d) {
  switch (config.scorer) {
    case Scorer::dot: {
      if (h_e.value().size() != h_d.value().size()) {
        throw DimensionError("dot scorer: encoder and decoder states differ in size");
      }
      return ng::sum(ng::mul(ng::reshape(h_e, {1, h_e.value().size()}),
                             ng::reshape(h_d, {1, h_d.value().size()})));
    }
    case Scorer::bilinear: {
      Var left = ng::matmul(ng::reshape(h_e, {1, h_e.value().size()}), p["att.bilinear.W"]);
      return ng::sum(ng::mul(left, ng::reshape(h_d, {1, h_d.value().size()})));
    }
    case Scorer::mlp: {
      Var pre = ng::add(ng::matmul(ng::reshape(h_e, {1, h_e.value().size()}), p["att.mlp.W_enc"]),
                        ng::matmul(ng::reshape(h_d, {1, h_d.value().size()}), p["att.mlp.W_dec"]));
      return ng::sum(ng::matmul(ng::tanh(pre), p["att.mlp.V"]));
    }
  }
  throw ConfigError("unknown scorer");
}

Attention attend(const BoundParams& p, const ModelConfig& config, const EncoderStates& enc,
                 Var h_d) {
  std::size_t frames = enc.length();
  Var column = ng::reshape(h_d, {h_d.value().size(), 1});
  Var scores;  // S' x 1
  switch (config.scorer) {
    case Scorer::dot:
      scores = ng::matmul(enc.states, column);
      break;
    case Scorer::bilinear:
      scores = ng::matmul(enc.states, ng::matmul(p["att.bilinear.W"], column));
      break;
    case Scorer::mlp: {
      Var query = ng::matmul(ng::reshape(h_d, {1, h_d.value().size()}), p["att.mlp.W_dec"]);
      scores = ng::matmul(ng::tanh(ng::add_row(enc.mlp_keys, query)), p["att.mlp.V"]);
      break;
    }
  }
  Var alignment = ng::softmax_row(ng::reshape(scores, {1, frames}));
  Var context = ng::matmul(alignment, enc.states);
  return {context, alignment};
}

DecoderState initial_state(const BoundParams& p, const ModelConfig& config) {
  ng::Tape& tape = p.tape();
  return {zeros_row(tape, config.dec_hidden), zeros_row(tape, config.dec_hidden),
          zeros_row(tape, config.enc_dim()), 0};
}

StepOutput decode_step(const BoundParams& p, const ModelConfig& config,
                       const EncoderStates& enc, Symbol prev, const DecoderState& state) {
  if (prev < 0 || static_cast<std::size_t>(prev) > config.vocab_size) {
    throw IndexError("decode_step: symbol " + std::to_string(prev) + " outside [0, " +
                     std::to_string(config.vocab_size + 1) + ")");
  }
  std::size_t id = static_cast<std::size_t>(prev);
  Var embedded = ng::gather_rows(p["dec.embed"], std::span<const std::size_t>(&id, 1));
  Var input = ng::concat_cols(embedded, state.prev_context);
  Var gates = ng::add(ng::add(ng::matmul(input, p["dec.lstm.w_ih"]),
                              ng::matmul(state.h, p["dec.lstm.w_hh"])),
                      p["dec.lstm.b"]);
  LstmState cell = lstm_cell(gates, state.c, config.dec_hidden);
  Attention att = attend(p, config, enc, cell.h);
  Var logits = ng::add(ng::matmul(ng::concat_cols(cell.h, att.context), p["dec.out.W"]),
                       p["dec.out.b"]);
  StepOutput out;
  out.log_probs = ng::log_softmax_row(logits);
  out.alignment = att.alignment;
  out.state = {cell.h, cell.c, att.context, state.step_index + 1};
  return out;
}

std::vector<Var> score_emissions(const BoundParams& p, const ModelConfig& config,
                                 const EncoderStates& enc, std::span<const Symbol> emitted) {
  std::vector<Var> steps;
  steps.reserve(emitted.size());
  DecoderState state = initial_state(p, config);
  Symbol prev = config.sos_id();
  for (Symbol y : emitted) {
    if (y < 0 || static_cast<std::size_t>(y) >= config.vocab_size) {
      throw IndexError("target symbol " + std::to_string(y) + " is not an output id");
    }
    StepOutput out = decode_step(p, config, enc, prev, state);
    steps.push_back(ng::pick(out.log_probs, static_cast<std::size_t>(y)));
    state = out.state;
    prev = y;
  }
  return steps;
}

SequenceLogProb sequence_log_prob(const BoundParams& p, const ModelConfig& config,
                                  const Tensor& features, std::span<const Symbol> transcript) {
  if (transcript.empty() || transcript.back() != config.eos_id()) {
    throw ContractError("sequence_log_prob: transcript must end with eos");
  }
  EncoderStates enc = encode(p, config, features);
  SequenceLogProb out;
  out.per_step_vars = score_emissions(p, config, enc, transcript);
  out.total = ng::sum(ng::stack_rows(out.per_step_vars));
  for (const auto& v : out.per_step_vars) out.per_step.push_back(v.item());
  return out;
}

}  // namespace seqrl
