#pragma once

#include <stdexcept>
#include <string>

namespace wingkit {

// Base of every error the toolkit throws. Subclasses name the failure so
// callers can catch exactly the condition they care about.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define WINGKIT_DEFINE_ERROR(Name)            \
  class Name : public Error {                 \
   public:                                    \
    explicit Name(const std::string& what)    \
        : Error(#Name ": " + what) {}         \
  }

WINGKIT_DEFINE_ERROR(GimbalDegenerate);
WINGKIT_DEFINE_ERROR(DegenerateConfiguration);
WINGKIT_DEFINE_ERROR(TooFewSamples);
WINGKIT_DEFINE_ERROR(EmptyDataset);
WINGKIT_DEFINE_ERROR(NonFiniteResidual);
WINGKIT_DEFINE_ERROR(NotVisible);
WINGKIT_DEFINE_ERROR(DegeneratePair);
WINGKIT_DEFINE_ERROR(DimensionMismatch);
WINGKIT_DEFINE_ERROR(OutOfArena);
WINGKIT_DEFINE_ERROR(EmptyResults);
WINGKIT_DEFINE_ERROR(IoFailure);
WINGKIT_DEFINE_ERROR(OutOfRange);
WINGKIT_DEFINE_ERROR(TransportClosed);
WINGKIT_DEFINE_ERROR(InvalidArgument);

#undef WINGKIT_DEFINE_ERROR

}  // namespace wingkit
