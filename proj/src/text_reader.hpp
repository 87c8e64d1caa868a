#pragma once

// Line/token reader shared by the corpus and checkpoint parsers.

#include <charconv>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "seqrl/errors.hpp"

namespace seqrl::detail {

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  // Next line split into whitespace tokens; ParseError at end of input.
  std::vector<std::string> next(const char* expecting) {
    if (pos_ >= text_.size()) {
      throw ParseError("line " + std::to_string(line_ + 1) + ": unexpected end of file, expected " +
                       expecting);
    }
    auto end = text_.find('\n', pos_);
    if (end == std::string_view::npos) end = text_.size();
    std::string line(text_.substr(pos_, end - pos_));
    pos_ = end + 1;
    ++line_;
    std::istringstream is(line);
    std::vector<std::string> tokens;
    for (std::string tok; is >> tok;) tokens.push_back(tok);
    return tokens;
  }

  bool done() const { return pos_ >= text_.size(); }
  std::size_t line() const { return line_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("line " + std::to_string(line_) + ": " + what);
  }

  std::size_t to_size(const std::string& tok) const {
    std::size_t v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      fail("expected a nonnegative integer, got '" + tok + "'");
    }
    return v;
  }

  double to_double(const std::string& tok) const {
    double v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      fail("expected a decimal number, got '" + tok + "'");
    }
    return v;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

}  // namespace seqrl::detail
