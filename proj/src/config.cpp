#include "seqrl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "seqrl/errors.hpp"

namespace seqrl {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(where() + "must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where() + "'" + key + "': " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where() + "unknown key '" + it.key() + "'");
    }
  }

 private:
  std::string where() const { return "config " + (section_.empty() ? "" : section_ + ": "); }

  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

json model_to_json(const ModelConfig& m) {
  return json{{"feature_dim", m.feature_dim}, {"enc_hidden", m.enc_hidden},
              {"enc_layers", m.enc_layers},   {"subsample_layers", m.subsample_layers},
              {"embed_dim", m.embed_dim},     {"dec_hidden", m.dec_hidden},
              {"scorer", std::string(scorer_name(m.scorer))}, {"mlp_hidden", m.mlp_hidden},
              {"vocab_size", m.vocab_size}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  Reader r(j, "model");
  r.get("feature_dim", m.feature_dim);
  r.get("enc_hidden", m.enc_hidden);
  r.get("enc_layers", m.enc_layers);
  r.get("subsample_layers", m.subsample_layers);
  r.get("embed_dim", m.embed_dim);
  r.get("dec_hidden", m.dec_hidden);
  std::string scorer(scorer_name(m.scorer));
  r.get("scorer", scorer);
  m.scorer = parse_scorer(scorer);
  r.get("mlp_hidden", m.mlp_hidden);
  r.get("vocab_size", m.vocab_size);
  r.finish();
  return m;
}

json rl_to_json(const RlConfig& c) {
  return json{{"mode", std::string(reward_mode_name(c.mode))},
              {"discount", c.discount},
              {"samples", c.samples},
              {"rl_weight", c.rl_weight},
              {"normalization", std::string(normalization_name(c.normalization))}};
}

RlConfig rl_from_json(const json& j) {
  RlConfig c;
  Reader r(j, "rl");
  std::string mode(reward_mode_name(c.mode));
  r.get("mode", mode);
  c.mode = parse_reward_mode(mode);
  r.get("discount", c.discount);
  r.get("samples", c.samples);
  r.get("rl_weight", c.rl_weight);
  // Default normalization follows the reward mode's pairing.
  std::string norm(c.mode == RewardMode::final_reward ? "across_samples" : "timewise");
  r.get("normalization", norm);
  c.normalization = parse_normalization(norm);
  r.finish();
  return c;
}

// `workers` only changes how a run executes, not its results, so the
// checkpoint echo leaves it out.
json train_to_json(const TrainConfig& c, bool with_workers) {
  json j{{"seed", c.seed},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"eval_beam", c.eval_beam},
              {"log_wall_time", c.log_wall_time},
              {"model", model_to_json(c.model)},
              {"rl", rl_to_json(c.rl)}};
  if (with_workers) j["workers"] = c.workers;
  return j;
}

void train_fields(Reader& r, TrainConfig& c) {
  r.get("seed", c.seed);
  r.get("learning_rate", c.learning_rate);
  r.get("batch_size", c.batch_size);
  r.get("max_epochs", c.max_epochs);
  r.get("patience", c.patience);
  r.get("eval_beam", c.eval_beam);
  r.get("workers", c.workers);
  r.get("log_wall_time", c.log_wall_time);
  if (const json* m = r.child("model")) c.model = model_from_json(*m);
  if (const json* rl = r.child("rl")) c.rl = rl_from_json(*rl);
}

json data_to_json(const DataConfig& d) {
  return json{{"graphemes", d.graphemes},
              {"train", d.train},
              {"dev", d.dev},
              {"test", d.test},
              {"min_len", d.spec.min_len},
              {"max_len", d.spec.max_len},
              {"frames_per_symbol", d.spec.frames_per_symbol},
              {"noise", d.spec.noise},
              {"feature_dim", d.spec.feature_dim}};
}

DataConfig data_from_json(const json& j) {
  DataConfig d;
  Reader r(j, "data");
  r.get("graphemes", d.graphemes);
  r.get("train", d.train);
  r.get("dev", d.dev);
  r.get("test", d.test);
  r.get("min_len", d.spec.min_len);
  r.get("max_len", d.spec.max_len);
  r.get("frames_per_symbol", d.spec.frames_per_symbol);
  r.get("noise", d.spec.noise);
  r.get("feature_dim", d.spec.feature_dim);
  r.finish();
  return d;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

bool DataConfig::operator==(const DataConfig& o) const {
  return data_to_json(*this) == data_to_json(o);
}

RunConfig parse_run_config(const std::string& json_text) {
  json j = parse_json(json_text);
  RunConfig c;
  Reader r(j, "");
  train_fields(r, c.train);
  if (const json* d = r.child("data")) c.data = data_from_json(*d);
  r.finish();
  c.train.validate();
  c.data.spec.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& config) {
  json j = train_to_json(config.train, true);
  j["data"] = data_to_json(config.data);
  return j.dump(2) + "\n";
}

std::string dump_train_config(const TrainConfig& config) { return train_to_json(config, false).dump(); }

TrainConfig parse_train_config(const std::string& json_text) {
  json j = parse_json(json_text);
  TrainConfig c;
  Reader r(j, "");
  train_fields(r, c);
  r.finish();
  c.validate();
  return c;
}

}  // namespace seqrl
