#pragma once

#include <stdexcept>
#include <string>

namespace fontaware {

// Base of every error raised by the library. Input/data problems derive from
// DataError so front ends can map them to one exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

#define FONTAWARE_DEFINE_ERROR(Name, Base)          \
  class Name : public Base {                        \
   public:                                          \
    explicit Name(const std::string& what)          \
        : Base(std::string(#Name ": ") + what) {}   \
  };

FONTAWARE_DEFINE_ERROR(UnparseableFont, DataError)
FONTAWARE_DEFINE_ERROR(MissingGlyph, DataError)
FONTAWARE_DEFINE_ERROR(TooFewFonts, DataError)
FONTAWARE_DEFINE_ERROR(InsufficientFonts, DataError)
FONTAWARE_DEFINE_ERROR(ShapeMismatch, DataError)
FONTAWARE_DEFINE_ERROR(NonStochasticAttention, DataError)
FONTAWARE_DEFINE_ERROR(MissingCheckpoint, DataError)
FONTAWARE_DEFINE_ERROR(CacheMiss, DataError)
FONTAWARE_DEFINE_ERROR(EmptySourceSet, DataError)
FONTAWARE_DEFINE_ERROR(UnknownLetter, DataError)
FONTAWARE_DEFINE_ERROR(KeyMismatch, DataError)
FONTAWARE_DEFINE_ERROR(FormatError, DataError)

// Training produced a non-finite loss.
FONTAWARE_DEFINE_ERROR(Divergence, Error)

#undef FONTAWARE_DEFINE_ERROR

}  // namespace fontaware
