#pragma once

#include <stdexcept>
#include <string>

namespace seqrl {

// Every failure the toolkit reports is one of these categories. The CLI maps
// them onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "error"; }
};

#define SEQRL_ERROR_KIND(Name, label)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    using Error::Error;                                                 \
    const char* category() const noexcept override { return label; }   \
  };

SEQRL_ERROR_KIND(DimensionError, "dimension")
SEQRL_ERROR_KIND(IndexError, "index")
SEQRL_ERROR_KIND(ContractError, "contract")
SEQRL_ERROR_KIND(StateError, "state")
SEQRL_ERROR_KIND(ConfigError, "config")
SEQRL_ERROR_KIND(InputError, "input")
SEQRL_ERROR_KIND(ParseError, "parse")
SEQRL_ERROR_KIND(SchemaError, "schema")

#undef SEQRL_ERROR_KIND

}  // namespace seqrl
