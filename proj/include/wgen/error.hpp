#pragma once

#include <stdexcept>
#include <string>

namespace wgen {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define WGEN_DEFINE_ERROR(Name)            \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  };

WGEN_DEFINE_ERROR(ShapeError)
WGEN_DEFINE_ERROR(IndexError)
WGEN_DEFINE_ERROR(ContractError)
WGEN_DEFINE_ERROR(NumericError)
WGEN_DEFINE_ERROR(ConfigError)
WGEN_DEFINE_ERROR(ArchError)
WGEN_DEFINE_ERROR(LengthError)
WGEN_DEFINE_ERROR(GenerationError)
WGEN_DEFINE_ERROR(ParseError)
WGEN_DEFINE_ERROR(ExtractionError)
WGEN_DEFINE_ERROR(CostError)
WGEN_DEFINE_ERROR(LoadError)
WGEN_DEFINE_ERROR(IoError)

#undef WGEN_DEFINE_ERROR

}  // namespace wgen
