#include "seqrl/synthtask.hpp"

#include <charconv>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "seqrl/editdist.hpp"
#include "seqrl/errors.hpp"
#include "text_reader.hpp"

namespace seqrl {

Vocabulary Vocabulary::from_graphemes(std::vector<std::string> graphemes) {
  Vocabulary v;
  v.symbols = std::move(graphemes);
  v.symbols.emplace_back("<eos>");
  v.symbols.emplace_back("<sos>");
  v.eos_id = static_cast<Symbol>(v.symbols.size() - 2);
  v.sos_id = static_cast<Symbol>(v.symbols.size() - 1);
  v.validate();
  return v;
}

Vocabulary Vocabulary::letters(std::size_t n) {
  if (n == 0 || n > 26) throw ConfigError("letters() supports 1..26 graphemes");
  std::vector<std::string> g;
  for (std::size_t i = 0; i < n; ++i) g.emplace_back(1, static_cast<char>('a' + i));
  return from_graphemes(std::move(g));
}

Vocabulary Vocabulary::characters32() {
  std::vector<std::string> g;
  for (char c = 'a'; c <= 'z'; ++c) g.emplace_back(1, c);
  for (const char* s : {"'", ".", "-", "<space>", "<noise>"}) g.emplace_back(s);
  return from_graphemes(std::move(g));
}

void Vocabulary::validate() const {
  if (symbols.size() < 3) throw SchemaError("vocabulary needs a grapheme, eos and sos");
  std::set<std::string> seen;
  for (const auto& s : symbols) {
    if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos) {
      throw SchemaError("vocabulary symbol '" + s + "' is empty or contains whitespace");
    }
    if (!seen.insert(s).second) throw SchemaError("duplicate vocabulary symbol '" + s + "'");
  }
  auto n = static_cast<Symbol>(symbols.size());
  if (eos_id != n - 2 || sos_id != n - 1 || symbols[eos_id] != "<eos>" ||
      symbols[sos_id] != "<sos>") {
    throw SchemaError("vocabulary must end with <eos> then <sos>");
  }
}

Symbol Vocabulary::id(std::string_view symbol) const {
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] == symbol) return static_cast<Symbol>(i);
  }
  throw SchemaError("symbol '" + std::string(symbol) + "' not in vocabulary");
}

const std::string& Vocabulary::symbol(Symbol id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols.size()) {
    throw IndexError("symbol id " + std::to_string(id) + " outside vocabulary");
  }
  return symbols[static_cast<std::size_t>(id)];
}

std::string Vocabulary::render(std::span<const Symbol> ids) const {
  std::string out;
  for (Symbol s : ids) out += symbol(s);
  return out;
}

void SynthSpec::validate() const {
  if (frames_per_symbol == 0) throw ConfigError("frames_per_symbol must be at least 1");
  if (!(noise >= 0.0)) throw ConfigError("noise must be nonnegative");
  if (min_len < 1 || max_len > 50 || min_len > max_len) {
    throw ConfigError("transcript length range must lie within [1, 50]");
  }
  if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
}

ng::Tensor prototype_matrix(const Vocabulary& vocab, std::size_t feature_dim,
                            std::uint64_t seed) {
  std::size_t g = vocab.grapheme_count();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(feature_dim * g);
  for (auto& v : values) v = normal(rng);
  return ng::Tensor({feature_dim, g}, std::move(values));
}

Corpus generate_corpus(const Vocabulary& vocab, const SynthSpec& spec, std::uint64_t seed,
                       std::uint64_t stream, std::string_view id_prefix) {
  vocab.validate();
  spec.validate();
  ng::Tensor protos = prototype_matrix(vocab, spec.feature_dim, seed);
  std::size_t g = vocab.grapheme_count();
  std::size_t f = spec.feature_dim;

  Corpus corpus;
  corpus.vocab = vocab;
  corpus.feature_dim = f;
  for (std::size_t n = 0; n < spec.utterances; ++n) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(n),
                      0x5e9u};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> length(spec.min_len, spec.max_len);
    std::uniform_int_distribution<std::size_t> grapheme(0, g - 1);
    std::normal_distribution<double> noise(0.0, 1.0);

    Utterance u;
    u.id = std::string(id_prefix) + "-" + std::to_string(n);
    std::size_t len = length(rng);
    for (std::size_t i = 0; i < len; ++i) u.transcript.push_back(static_cast<Symbol>(grapheme(rng)));
    std::vector<double> frames;
    frames.reserve(len * spec.frames_per_symbol * f);
    for (Symbol s : u.transcript) {
      for (std::size_t k = 0; k < spec.frames_per_symbol; ++k) {
        for (std::size_t d = 0; d < f; ++d) {
          double v = protos.at(d, static_cast<std::size_t>(s));
          if (spec.noise > 0.0) v += spec.noise * noise(rng);
          frames.push_back(v);
        }
      }
    }
    u.features = ng::Tensor({len * spec.frames_per_symbol, f}, std::move(frames));
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

double cer(std::span<const Symbol> hyp, std::span<const Symbol> ref) {
  if (ref.empty()) throw ContractError("cer: empty reference");
  return static_cast<double>(edit_distance(hyp, ref)) / static_cast<double>(ref.size());
}

// ---------------------------------------------------------------------------
// Text format

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string format_corpus(const Corpus& corpus) {
  std::string out = "seqrl-corpus 1\n";
  out += "vocab " + std::to_string(corpus.vocab.symbols.size());
  for (const auto& s : corpus.vocab.symbols) out += " " + s;
  out += "\nfeature_dim " + std::to_string(corpus.feature_dim) + "\n";
  out += "utterances " + std::to_string(corpus.utterances.size()) + "\n";
  for (const auto& u : corpus.utterances) {
    out += "utt " + u.id + " " + std::to_string(u.features.rows()) + " " +
           std::to_string(u.transcript.size());
    for (Symbol s : u.transcript) out += " " + corpus.vocab.symbol(s);
    out += "\n";
    std::size_t f = u.features.cols();
    for (std::size_t r = 0; r < u.features.rows(); ++r) {
      for (std::size_t c = 0; c < f; ++c) {
        if (c) out += ' ';
        out += format_double(u.features.values[r * f + c]);
      }
      out += '\n';
    }
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write corpus to " + path.string());
  os << format_corpus(corpus);
  if (!os) throw InputError("failed writing corpus to " + path.string());
}


Corpus parse_corpus(std::string_view text, const std::optional<Vocabulary>& expected) {
  detail::LineReader in(text);
  auto header = in.next("header");
  if (header.size() != 2 || header[0] != "seqrl-corpus" || header[1] != "1") {
    in.fail("not a seqrl-corpus version 1 file");
  }

  Corpus corpus;
  auto vocab = in.next("vocab line");
  if (vocab.size() < 2 || vocab[0] != "vocab") in.fail("expected 'vocab <n> <symbols...>'");
  std::size_t n = in.to_size(vocab[1]);
  if (vocab.size() != n + 2) in.fail("vocab line lists a different number of symbols than declared");
  std::vector<std::string> graphemes(vocab.begin() + 2, vocab.end());
  if (graphemes.size() < 2 || graphemes[n - 2] != "<eos>" || graphemes[n - 1] != "<sos>") {
    throw SchemaError("line " + std::to_string(in.line()) + ": vocabulary must end with <eos> <sos>");
  }
  graphemes.resize(n - 2);
  corpus.vocab = Vocabulary::from_graphemes(std::move(graphemes));
  if (expected && !(*expected == corpus.vocab)) {
    throw SchemaError("corpus vocabulary differs from the expected vocabulary");
  }

  auto fdim = in.next("feature_dim line");
  if (fdim.size() != 2 || fdim[0] != "feature_dim") in.fail("expected 'feature_dim <F>'");
  corpus.feature_dim = in.to_size(fdim[1]);
  if (corpus.feature_dim == 0) in.fail("feature_dim must be positive");

  auto count_line = in.next("utterances line");
  if (count_line.size() != 2 || count_line[0] != "utterances") in.fail("expected 'utterances <N>'");
  std::size_t count = in.to_size(count_line[1]);

  std::size_t f = corpus.feature_dim;
  for (std::size_t k = 0; k < count; ++k) {
    auto head = in.next("utterance record");
    if (head.size() < 4 || head[0] != "utt") in.fail("expected 'utt <id> <frames> <T> <symbols...>'");
    Utterance u;
    u.id = head[1];
    std::size_t frames = in.to_size(head[2]);
    std::size_t len = in.to_size(head[3]);
    if (frames == 0) in.fail("utterance has no frames");
    if (head.size() != len + 4) in.fail("transcript length does not match declared count");
    for (std::size_t i = 0; i < len; ++i) {
      Symbol s = 0;
      try {
        s = corpus.vocab.id(head[4 + i]);
      } catch (const SchemaError&) {
        in.fail("unknown symbol '" + head[4 + i] + "'");
      }
      if (s >= corpus.vocab.eos_id) in.fail("transcripts may not contain eos/sos");
      u.transcript.push_back(s);
    }
    std::vector<double> values;
    values.reserve(frames * f);
    for (std::size_t r = 0; r < frames; ++r) {
      auto row = in.next("feature row");
      if (row.size() != f) {
        in.fail("feature row has " + std::to_string(row.size()) + " values, expected " +
                std::to_string(f));
      }
      for (const auto& tok : row) values.push_back(in.to_double(tok));
    }
    u.features = ng::Tensor({frames, f}, std::move(values));
    corpus.utterances.push_back(std::move(u));
  }
  while (!in.done()) {
    if (!in.next("end of file").empty()) in.fail("trailing content after the last utterance");
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const std::optional<Vocabulary>& expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open corpus " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_corpus(ss.str(), expected);
}

}  // namespace seqrl
