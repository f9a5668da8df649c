#pragma once

#include <stdexcept>
#include <string>

namespace tactex {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TACTEX_DEFINE_ERROR(Name)        \
  class Name : public Error {            \
   public:                               \
    explicit Name(const std::string& m)  \
        : Error(#Name ": " + m) {}       \
  }

// geometry
TACTEX_DEFINE_ERROR(InvalidArgument);
TACTEX_DEFINE_ERROR(DegenerateCloud);
TACTEX_DEFINE_ERROR(NormalizationUndefined);
TACTEX_DEFINE_ERROR(EmptyCloud);
TACTEX_DEFINE_ERROR(TooFewPoints);
TACTEX_DEFINE_ERROR(DegenerateNeighborhood);
TACTEX_DEFINE_ERROR(IoError);

// gripper / contact modes
TACTEX_DEFINE_ERROR(PenetrationTooDeep);
TACTEX_DEFINE_ERROR(NoContact);
TACTEX_DEFINE_ERROR(ModeRequiresContact);

// data generation
TACTEX_DEFINE_ERROR(MissingTimestamps);
TACTEX_DEFINE_ERROR(GenerationFailed);

// completion
TACTEX_DEFINE_ERROR(DegenerateConfiguration);
TACTEX_DEFINE_ERROR(FitFailed);
TACTEX_DEFINE_ERROR(Timeout);
TACTEX_DEFINE_ERROR(ContractViolation);

// exploration / harness
TACTEX_DEFINE_ERROR(NothingToExplore);
TACTEX_DEFINE_ERROR(NoFeasibleCandidate);
TACTEX_DEFINE_ERROR(SchemaMismatch);
TACTEX_DEFINE_ERROR(ConfigError);

#undef TACTEX_DEFINE_ERROR

}  // namespace tactex
