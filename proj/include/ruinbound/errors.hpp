#pragma once

#include <stdexcept>
#include <string>

namespace ruinbound {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RUINBOUND_DEFINE_ERROR(Name)        \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  };

RUINBOUND_DEFINE_ERROR(SingularMatrix)
RUINBOUND_DEFINE_ERROR(DimensionTooLarge)
RUINBOUND_DEFINE_ERROR(DimensionMismatch)
RUINBOUND_DEFINE_ERROR(InvalidBounds)
RUINBOUND_DEFINE_ERROR(OriginInSet)
RUINBOUND_DEFINE_ERROR(FamilyTooLarge)
RUINBOUND_DEFINE_ERROR(HolderViolation)
RUINBOUND_DEFINE_ERROR(NonMonotoneTransform)
RUINBOUND_DEFINE_ERROR(TransformHypothesisViolated)
RUINBOUND_DEFINE_ERROR(SingularDeltaCovariance)
RUINBOUND_DEFINE_ERROR(BudgetExceeded)
RUINBOUND_DEFINE_ERROR(EmbeddingFailed)
RUINBOUND_DEFINE_ERROR(InvalidArgument)
RUINBOUND_DEFINE_ERROR(ConfigError)

#undef RUINBOUND_DEFINE_ERROR

}  // namespace ruinbound
