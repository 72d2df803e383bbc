#pragma once

#include <stdexcept>
#include <string>

namespace lics {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LICS_DEFINE_ERROR(Name)          \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

LICS_DEFINE_ERROR(InvalidConfig);
LICS_DEFINE_ERROR(ConnectivityFailure);
LICS_DEFINE_ERROR(NoPath);
LICS_DEFINE_ERROR(ParseError);
LICS_DEFINE_ERROR(OutOfBounds);
LICS_DEFINE_ERROR(DegenerateGoal);
LICS_DEFINE_ERROR(ShapeMismatch);
LICS_DEFINE_ERROR(NonFiniteParams);
LICS_DEFINE_ERROR(NonFiniteLoss);
LICS_DEFINE_ERROR(SchemaMismatch);
LICS_DEFINE_ERROR(MissingLstar);
LICS_DEFINE_ERROR(PortInUse);

#undef LICS_DEFINE_ERROR

}  // namespace lics
