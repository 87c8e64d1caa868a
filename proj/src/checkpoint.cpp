// Checkpoint text format:
//
//   seqrl-checkpoint 1
//   config <single-line JSON>
//   epochs <mle> <rl>
//   best_dev_cer <value>
//   rng <mt19937_64 state words>
//   stats <decay> <slots>
//   means <slots values>
//   variances <slots values>
//   adam <step>
//   param <name> <rank> <dims...>     then one line of values
//   moment1 <name> <n>                then one line of values (Adam m)
//   moment2 <name> <n>                then one line of values (Adam v)
//   end
//
// Floats use 17 significant digits so a load/save cycle is byte-stable.

#include <fstream>
#include <set>
#include <sstream>

#include "seqrl/config.hpp"
#include "seqrl/errors.hpp"
#include "seqrl/trainer.hpp"
#include "text_reader.hpp"

namespace seqrl {

namespace {

void append_values(std::string& out, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_double(values[i]);
  }
  out += '\n';
}

std::vector<double> read_values(detail::LineReader& in, std::size_t expected,
                                const std::string& what) {
  auto tokens = in.next("value line");
  if (tokens.size() != expected) {
    throw SchemaError("line " + std::to_string(in.line()) + ": " + what + " holds " +
                      std::to_string(tokens.size()) + " values, header declares " +
                      std::to_string(expected));
  }
  std::vector<double> values;
  values.reserve(tokens.size());
  for (const auto& t : tokens) values.push_back(in.to_double(t));
  return values;
}

void expect_key(detail::LineReader& in, const std::vector<std::string>& tokens,
                const char* key, std::size_t min_tokens) {
  if (tokens.empty() || tokens[0] != key || tokens.size() < min_tokens) {
    in.fail(std::string("expected '") + key + "' record");
  }
}

}  // namespace

std::string format_checkpoint(const Checkpoint& ckpt) {
  std::string out = "seqrl-checkpoint 1\n";
  out += "config " + dump_train_config(ckpt.config) + "\n";
  out += "epochs " + std::to_string(ckpt.mle_epochs) + " " + std::to_string(ckpt.rl_epochs) + "\n";
  out += "best_dev_cer " + format_double(ckpt.best_dev_cer) + "\n";
  out += "rng " + ckpt.rng_state + "\n";
  out += "stats " + format_double(ckpt.stats.decay()) + " " + std::to_string(ckpt.stats.slots()) +
         "\n";
  out += "means";
  for (double v : ckpt.stats.means()) out += " " + format_double(v);
  out += "\nvariances";
  for (double v : ckpt.stats.variances()) out += " " + format_double(v);
  out += "\nadam " + std::to_string(ckpt.adam.step) + "\n";
  for (const auto& [name, t] : ckpt.params.tensors) {
    out += "param " + name + " " + std::to_string(t.shape.size());
    for (auto d : t.shape) out += " " + std::to_string(d);
    out += "\n";
    append_values(out, t.values);
  }
  for (const auto& [tag, moments] :
       {std::pair{"moment1", &ckpt.adam.first_moment}, std::pair{"moment2", &ckpt.adam.second_moment}}) {
    for (const auto& [name, values] : *moments) {
      out += std::string(tag) + " " + name + " " + std::to_string(values.size()) + "\n";
      append_values(out, values);
    }
  }
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(std::string_view text) {
  detail::LineReader in(text);
  auto header = in.next("header");
  if (header.size() != 2 || header[0] != "seqrl-checkpoint" || header[1] != "1") {
    in.fail("not a seqrl-checkpoint version 1 file");
  }
  Checkpoint ckpt;

  // The config line is JSON and may contain spaces; re-join its tokens.
  auto cfg = in.next("config");
  expect_key(in, cfg, "config", 2);
  std::string json_text;
  for (std::size_t i = 1; i < cfg.size(); ++i) json_text += (i > 1 ? " " : "") + cfg[i];
  ckpt.config = parse_train_config(json_text);

  auto epochs = in.next("epochs");
  expect_key(in, epochs, "epochs", 3);
  ckpt.mle_epochs = in.to_size(epochs[1]);
  ckpt.rl_epochs = in.to_size(epochs[2]);

  auto best = in.next("best_dev_cer");
  expect_key(in, best, "best_dev_cer", 2);
  ckpt.best_dev_cer = in.to_double(best[1]);

  auto rng = in.next("rng");
  expect_key(in, rng, "rng", 1);
  for (std::size_t i = 1; i < rng.size(); ++i) ckpt.rng_state += (i > 1 ? " " : "") + rng[i];

  auto stats = in.next("stats");
  expect_key(in, stats, "stats", 3);
  double decay = in.to_double(stats[1]);
  std::size_t slots = in.to_size(stats[2]);
  auto means = in.next("means");
  expect_key(in, means, "means", 1);
  auto vars = in.next("variances");
  expect_key(in, vars, "variances", 1);
  if (means.size() != slots + 1 || vars.size() != slots + 1) {
    throw SchemaError("moving statistics do not have the declared " + std::to_string(slots) +
                      " slots");
  }
  std::vector<double> mv, vv;
  for (std::size_t i = 1; i <= slots; ++i) {
    mv.push_back(in.to_double(means[i]));
    vv.push_back(in.to_double(vars[i]));
  }
  ckpt.stats = MovingStats(decay, std::move(mv), std::move(vv));

  auto adam = in.next("adam");
  expect_key(in, adam, "adam", 2);
  ckpt.adam.step = in.to_size(adam[1]);

  for (;;) {
    auto rec = in.next("param/moment/end record");
    if (rec.size() == 1 && rec[0] == "end") break;
    if (rec.size() >= 3 && rec[0] == "param") {
      std::size_t rank = in.to_size(rec[2]);
      if (rank > 2 || rec.size() != 3 + rank) {
        throw SchemaError("line " + std::to_string(in.line()) + ": bad shape field for '" +
                          rec[1] + "'");
      }
      ng::Shape shape;
      for (std::size_t k = 0; k < rank; ++k) shape.push_back(in.to_size(rec[3 + k]));
      for (auto d : shape) {
        if (d == 0) throw SchemaError("zero extent in shape of '" + rec[1] + "'");
      }
      auto values = read_values(in, ng::shape_size(shape), "parameter " + rec[1]);
      if (!ckpt.params.tensors.emplace(rec[1], ng::Tensor(shape, std::move(values), true)).second) {
        throw SchemaError("duplicate parameter '" + rec[1] + "'");
      }
    } else if (rec.size() == 3 && (rec[0] == "moment1" || rec[0] == "moment2")) {
      auto values = read_values(in, in.to_size(rec[2]), rec[0] + " " + rec[1]);
      auto& target = rec[0] == "moment1" ? ckpt.adam.first_moment : ckpt.adam.second_moment;
      target[rec[1]] = std::move(values);
    } else {
      in.fail("expected 'param', 'moment1', 'moment2' or 'end'");
    }
  }
  ckpt.params.check_matches(ckpt.config.model);
  for (const auto* moments : {&ckpt.adam.first_moment, &ckpt.adam.second_moment}) {
    for (const auto& [name, values] : *moments) {
      if (!ckpt.params.tensors.count(name) || ckpt.params.at(name).size() != values.size()) {
        throw SchemaError("optimizer moment '" + name + "' does not match any parameter");
      }
    }
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write checkpoint " + path.string());
  os << format_checkpoint(ckpt);
  if (!os) throw InputError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace seqrl
