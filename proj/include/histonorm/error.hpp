#pragma once

#include <stdexcept>
#include <string>

namespace histonorm {

// Root of every library error. `kind()` is the machine-readable tag the CLI
// echoes in its error record.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define HISTONORM_DEFINE_ERROR(Name, tag)                                \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(tag, what) {}         \
  };

HISTONORM_DEFINE_ERROR(DimensionError, "dimension")
HISTONORM_DEFINE_ERROR(NumericError, "numeric")
HISTONORM_DEFINE_ERROR(GamutError, "gamut")
HISTONORM_DEFINE_ERROR(ParseError, "parse")
HISTONORM_DEFINE_ERROR(EmptyInputError, "empty_input")
HISTONORM_DEFINE_ERROR(LookupError, "lookup")
HISTONORM_DEFINE_ERROR(StateError, "state")
HISTONORM_DEFINE_ERROR(InsufficientDataError, "insufficient_data")
HISTONORM_DEFINE_ERROR(DomainError, "domain")
HISTONORM_DEFINE_ERROR(UsageError, "usage")

#undef HISTONORM_DEFINE_ERROR

}  // namespace histonorm
