// seqrl: synthetic data generation, MLE and RL training, evaluation, decoding
// and the oracle self-checks.
//
//   seqrl gen-data     --config run.json --out-dir data
//   seqrl train-mle    --config run.json --data data/synth --out-dir runs/a
//   seqrl train-rl     --config run.json --data data/synth --init runs/a/mle.ckpt --out-dir runs/a
//   seqrl evaluate     --checkpoint runs/a/rl.ckpt --corpus data/synth.test [--beam 5]
//   seqrl decode       --checkpoint runs/a/rl.ckpt --corpus data/synth.test --utt test-3
//   seqrl oracle-check
//
// Exit status: 0 success, 1 failed oracle check, 2 usage; errors exit with a
// code per category (see exit_code below).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "seqrl/config.hpp"
#include "seqrl/editdist.hpp"
#include "seqrl/errors.hpp"
#include "seqrl/inference.hpp"
#include "seqrl/oracles.hpp"
#include "seqrl/synthtask.hpp"
#include "seqrl/trainer.hpp"

namespace fs = std::filesystem;
using namespace seqrl;

namespace {

int exit_code(const Error& e) {
  std::string_view c = e.category();
  if (c == "config") return 3;
  if (c == "input") return 4;
  if (c == "parse") return 5;
  if (c == "schema") return 6;
  if (c == "dimension") return 7;
  if (c == "index") return 8;
  if (c == "contract") return 9;
  if (c == "state") return 10;
  return 11;
}

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out_dir = ".";
};

void add_common(CLI::App* app, Common& c, bool with_out_dir) {
  app->add_option("--config", c.config_path, "JSON run configuration (defaults when omitted)")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "override the configured seed");
  app->add_option("--workers", c.workers, "threads for per-utterance work");
  if (with_out_dir) app->add_option("--out-dir", c.out_dir, "output directory");
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (c.seed) cfg.train.seed = *c.seed;
  if (c.workers) cfg.train.workers = *c.workers;
  cfg.train.validate();
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os || !(os << text)) throw InputError("cannot write " + path.string());
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw InputError("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

Vocabulary vocab_for(const DataConfig& data) { return Vocabulary::letters(data.graphemes); }

void print_row(const MetricsRow& r) {
  std::printf("%-3s epoch %3zu  loss %-10s reward %-8s dev_cer %.4f\n", r.phase.c_str(), r.epoch,
              r.train_loss ? std::to_string(*r.train_loss).c_str() : "-",
              r.mean_reward ? std::to_string(*r.mean_reward).c_str() : "-", r.dev_cer);
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& c, const std::string& name) {
  RunConfig cfg = load_config(c);
  fs::path out = prepare_out_dir(c.out_dir);
  Vocabulary vocab = vocab_for(cfg.data);
  const std::pair<const char*, std::size_t> splits[] = {
      {"train", cfg.data.train}, {"dev", cfg.data.dev}, {"test", cfg.data.test}};
  std::uint64_t stream = 0;
  for (const auto& [split, count] : splits) {
    SynthSpec spec = cfg.data.spec;
    spec.utterances = count;
    Corpus corpus = generate_corpus(vocab, spec, cfg.train.seed, stream++, split);
    fs::path path = out / (name + "." + split);
    save_corpus(corpus, path);
    std::printf("%s: %zu utterances\n", path.c_str(), corpus.utterances.size());
  }
  return 0;
}

int cmd_train(const Common& c, const std::string& data, const std::string& init, bool rl) {
  RunConfig cfg = load_config(c);
  fs::path out = prepare_out_dir(c.out_dir);
  Vocabulary vocab = vocab_for(cfg.data);
  Corpus train = load_corpus(data + ".train", vocab);
  Corpus dev = load_corpus(data + ".dev", vocab);

  TrainResult result;
  const char* tag = rl ? "rl" : "mle";
  if (rl) {
    Checkpoint start = load_checkpoint(init);
    result = train_rl(train, dev, cfg.train, start, print_row);
  } else if (!init.empty()) {
    Checkpoint start = load_checkpoint(init);
    result = train_mle(train, dev, cfg.train, &start, print_row);
  } else {
    result = train_mle(train, dev, cfg.train, nullptr, print_row);
  }
  save_checkpoint(result.best, out / (std::string(tag) + ".ckpt"));
  write_file(out / (std::string(tag) + ".metrics.csv"), format_metrics(result.log));
  std::printf("best dev CER %.4f -> %s\n", result.best.best_dev_cer,
              (out / (std::string(tag) + ".ckpt")).c_str());
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& corpus_path, std::size_t beam,
                 std::size_t workers, const std::string& report_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  Corpus corpus = load_corpus(corpus_path);
  std::size_t width = beam ? beam : ckpt.config.eval_beam;
  EvalReport report = evaluate(corpus, ckpt.params, ckpt.config.model, width, workers);
  if (!report_path.empty()) write_file(report_path, format_eval_report(report));
  std::printf("CER %.4f (%zu errors / %zu reference symbols, beam %zu)\n", report.cer,
              report.errors, report.reference_symbols, width);
  return 0;
}

int cmd_decode(const std::string& ckpt_path, const std::string& corpus_path,
               const std::string& utt, std::size_t beam) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  Corpus corpus = load_corpus(corpus_path);
  const ModelConfig& model = ckpt.config.model;
  if (corpus.feature_dim != model.feature_dim) {
    throw SchemaError("corpus feature_dim does not match the checkpoint");
  }
  for (const auto& u : corpus.utterances) {
    if (u.id != utt) continue;
    std::size_t max_len = default_max_len(encoded_length(u.features.rows(), model.subsample_layers));
    std::size_t width = beam ? beam : ckpt.config.eval_beam;
    Hypothesis h = width == 1 ? greedy_decode(u.features, ckpt.params, model, max_len)
                              : beam_search(u.features, ckpt.params, model, width, max_len);
    std::printf("%s %s\n", u.id.c_str(), corpus.vocab.render(h.graphemes).c_str());
    std::printf("# ref %s  log_prob %.6f  normalized %.6f%s\n",
                corpus.vocab.render(u.transcript).c_str(), h.total_log_prob, h.normalized_score,
                h.truncated ? "  (truncated)" : "");
    return 0;
  }
  throw InputError("utterance '" + utt + "' not found in " + corpus_path);
}

// ---------------------------------------------------------------------------

struct CheckLine {
  bool ok;
  std::string text;
};

CheckLine check_telescoping(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t bad = 0;
  for (int n = 0; n < 1000; ++n) {
    Transcript hyp(rng() % 13), ref(1 + rng() % 12);
    for (auto& s : hyp) s = static_cast<Symbol>(rng() % 4);
    for (auto& s : ref) s = static_cast<Symbol>(rng() % 4);
    double total = 0.0;
    if (!hyp.empty()) {
      for (double r : step_rewards(hyp, ref)) total += r;
    }
    double expected = static_cast<double>(ref.size()) - static_cast<double>(edit_distance(hyp, ref));
    bad += total != expected;
  }
  return {bad == 0, "telescoping sum of step rewards, 1000 pairs, mismatches " + std::to_string(bad)};
}

int cmd_oracle_check(std::uint64_t seed, std::size_t mc_batches) {
  std::vector<CheckLine> lines;
  lines.push_back(check_telescoping(seed));

  ModelConfig tiny = oracle::tiny_config();
  ModelParams params = oracle::random_params(tiny, seed, 1.0);
  ng::Tensor x = oracle::random_features(6, tiny.feature_dim, seed + 1);
  const Transcript ref{0, 1};

  auto fd = oracle::check_mle_gradients(x, params, tiny, ref);
  lines.push_back({fd.max_rel_error <= 1e-6,
                   "finite differences over " + std::to_string(fd.checked) +
                       " scalars, max rel err " + format_double(fd.max_rel_error)});

  auto time = oracle::expected_estimator(x, params, tiny, ref, 3, oracle::Estimator::time_reward, 1.0);
  auto global =
      oracle::expected_estimator(x, params, tiny, ref, 3, oracle::Estimator::global_reward, 1.0);
  double diff = oracle::max_abs_difference(time, global);
  lines.push_back({diff <= 1e-10, "time vs global expected gradient, max diff " + format_double(diff)});

  auto mc = oracle::monte_carlo_check(x, params, tiny, ref, 3, mc_batches, 4, seed);
  bool mc_ok = mc.within_5se == mc.components && mc.within_3se >= 0.99 * mc.components;
  lines.push_back({mc_ok, "Monte Carlo global estimator, " + std::to_string(mc.batches) +
                              " batches: " + std::to_string(mc.within_3se) + "/" +
                              std::to_string(mc.components) + " within 3 SE, max |z| " +
                              format_double(mc.max_abs_z)});

  std::size_t agree = 0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    ModelParams p = oracle::random_params(tiny, seed + 100 + k, 1.0);
    ng::Tensor f = oracle::random_features(4, tiny.feature_dim, seed + 200 + k);
    auto beam = beam_search(f, p, tiny, 27, 3);
    auto best = oracle::exhaustive_best(f, p, tiny, 3);
    agree += beam.graphemes == best.graphemes && beam.normalized_score == best.normalized_score;
  }
  lines.push_back({agree == 20, "wide beam equals exhaustive argmax on " + std::to_string(agree) +
                                    "/20 tiny models"});

  bool all = true;
  for (const auto& l : lines) {
    std::printf("%s  %s\n", l.ok ? "PASS" : "FAIL", l.text.c_str());
    all = all && l.ok;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqrl: seq2seq training with edit-distance rewards"};
  app.require_subcommand(1);

  Common gen_opts;
  std::string data_name = "synth";
  auto* gen = app.add_subcommand("gen-data", "write synthetic train/dev/test corpora");
  add_common(gen, gen_opts, true);
  gen->add_option("--name", data_name, "corpus file stem");

  Common mle_opts;
  std::string mle_data, mle_init;
  auto* mle = app.add_subcommand("train-mle", "teacher-forced training with early stopping");
  add_common(mle, mle_opts, true);
  mle->add_option("--data", mle_data, "corpus stem (reads <stem>.train and <stem>.dev)")->required();
  mle->add_option("--init", mle_init, "resume from a checkpoint");

  Common rl_opts;
  std::string rl_data, rl_init;
  auto* rl = app.add_subcommand("train-rl", "MLE + REINFORCE training from an MLE checkpoint");
  add_common(rl, rl_opts, true);
  rl->add_option("--data", rl_data, "corpus stem (reads <stem>.train and <stem>.dev)")->required();
  rl->add_option("--init", rl_init, "starting checkpoint")->required()->check(CLI::ExistingFile);

  std::string eval_ckpt, eval_corpus, eval_report;
  std::size_t eval_beam = 0, eval_workers = 1;
  auto* ev = app.add_subcommand("evaluate", "corpus CER of a checkpoint");
  ev->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  ev->add_option("--corpus", eval_corpus)->required()->check(CLI::ExistingFile);
  ev->add_option("--beam", eval_beam, "beam width (default: checkpoint's eval_beam; 1 = greedy)");
  ev->add_option("--workers", eval_workers);
  ev->add_option("--report", eval_report, "write per-utterance CSV here");

  std::string dec_ckpt, dec_corpus, dec_utt;
  std::size_t dec_beam = 0;
  auto* dec = app.add_subcommand("decode", "decode one utterance");
  dec->add_option("--checkpoint", dec_ckpt)->required()->check(CLI::ExistingFile);
  dec->add_option("--corpus", dec_corpus)->required()->check(CLI::ExistingFile);
  dec->add_option("--utt", dec_utt, "utterance id")->required();
  dec->add_option("--beam", dec_beam);

  std::uint64_t oracle_seed = 7;
  std::size_t oracle_batches = 20000;
  auto* orc = app.add_subcommand("oracle-check", "run the enumeration and gradient oracles");
  orc->add_option("--seed", oracle_seed);
  orc->add_option("--mc-batches", oracle_batches, "Monte Carlo batches")->check(CLI::Range(2, 10000000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_data(gen_opts, data_name);
    if (*mle) return cmd_train(mle_opts, mle_data, mle_init, false);
    if (*rl) return cmd_train(rl_opts, rl_data, rl_init, true);
    if (*ev) return cmd_evaluate(eval_ckpt, eval_corpus, eval_beam, eval_workers, eval_report);
    if (*dec) return cmd_decode(dec_ckpt, dec_corpus, dec_utt, dec_beam);
    if (*orc) return cmd_oracle_check(oracle_seed, oracle_batches);
  } catch (const Error& e) {
    std::cerr << "seqrl: " << e.category() << " error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "seqrl: " << e.what() << "\n";
    return 12;
  }
  return 2;
}
