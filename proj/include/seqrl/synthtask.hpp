#pragma once

// Synthetic speech-like transduction corpus and its on-disk format.
//
// Each grapheme owns a fixed prototype feature vector; an utterance renders
// its transcript as frames_per_symbol noisy copies of each prototype.
//
// Corpus file (line oriented, whitespace separated):
//
//   seqrl-corpus 1
//   vocab <n> <sym_0> ... <sym_n-1>       eos and sos are the last two
//   feature_dim <F>
//   utterances <N>
//   utt <id> <frames> <T> <sym> ... <sym> one per utterance, followed by
//   <F decimals>                          <frames> feature rows
//
// Feature values are written with 17 significant digits.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqrl/numgrad.hpp"
#include "seqrl/types.hpp"

namespace seqrl {

struct Vocabulary {
  std::vector<std::string> symbols;  // graphemes, then eos, then sos
  Symbol eos_id = 0;
  Symbol sos_id = 0;

  // Appends <eos> and <sos> to the graphemes.
  static Vocabulary from_graphemes(std::vector<std::string> graphemes);
  // "a", "b", ... for n <= 26 graphemes.
  static Vocabulary letters(std::size_t n);
  // 26 letters, apostrophe, period, dash, space, noise (+ eos = 32 outputs).
  static Vocabulary characters32();

  void validate() const;
  std::size_t grapheme_count() const { return symbols.size() - 2; }
  // Decoder output classes: graphemes + eos.
  std::size_t output_size() const { return symbols.size() - 1; }
  Symbol id(std::string_view symbol) const;
  const std::string& symbol(Symbol id) const;
  std::string render(std::span<const Symbol> ids) const;

  bool operator==(const Vocabulary&) const = default;
};

struct Utterance {
  std::string id;
  ng::Tensor features;  // frames x feature_dim
  Transcript transcript;  // no eos
};

struct Corpus {
  Vocabulary vocab;
  std::size_t feature_dim = 0;
  std::vector<Utterance> utterances;
};

struct SynthSpec {
  std::size_t utterances = 100;
  std::size_t min_len = 3;
  std::size_t max_len = 12;
  std::size_t frames_per_symbol = 8;
  double noise = 0.3;
  std::size_t feature_dim = 16;

  void validate() const;
};

// feature_dim x graphemes, standard normal entries drawn from the seed alone
// so every split generated from one seed shares prototypes.
ng::Tensor prototype_matrix(const Vocabulary& vocab, std::size_t feature_dim,
                            std::uint64_t seed);

// `stream` separates splits drawn from the same seed (train/dev/test).
Corpus generate_corpus(const Vocabulary& vocab, const SynthSpec& spec, std::uint64_t seed,
                       std::uint64_t stream = 0, std::string_view id_prefix = "utt");

// edit_distance(hyp, ref) / |ref|.
double cer(std::span<const Symbol> hyp, std::span<const Symbol> ref);

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
// ParseError with the line number on malformed input; SchemaError when the
// file's vocabulary differs from `expected`.
Corpus load_corpus(const std::filesystem::path& path,
                   const std::optional<Vocabulary>& expected = std::nullopt);
Corpus parse_corpus(std::string_view text,
                    const std::optional<Vocabulary>& expected = std::nullopt);
std::string format_corpus(const Corpus& corpus);

// Shortest text that reads back as the same double (17 significant digits).
std::string format_double(double value);

}  // namespace seqrl
