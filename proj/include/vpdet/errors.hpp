#pragma once

#include <stdexcept>
#include <string>

namespace vpdet {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define VPDET_DEFINE_ERROR(Name)              \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  }

VPDET_DEFINE_ERROR(DegenerateInput);
VPDET_DEFINE_ERROR(IdenticalLines);
VPDET_DEFINE_ERROR(FormatError);
VPDET_DEFINE_ERROR(DimensionMismatch);
VPDET_DEFINE_ERROR(VersionMismatch);
VPDET_DEFINE_ERROR(InsufficientEdges);
VPDET_DEFINE_ERROR(DegenerateConfiguration);
VPDET_DEFINE_ERROR(TooFewMembers);
VPDET_DEFINE_ERROR(PointOutOfFrame);
VPDET_DEFINE_ERROR(LevelMismatch);
VPDET_DEFINE_ERROR(EmptyIndex);
VPDET_DEFINE_ERROR(NoGroundTruth);
VPDET_DEFINE_ERROR(SingleClass);

#undef VPDET_DEFINE_ERROR

}  // namespace vpdet
