// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace turbo {

// Base for every error raised by the library. The CLI maps ConfigError to
// exit code 2 and everything else to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TURBO_DEFINE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

TURBO_DEFINE_ERROR(DimensionError);
TURBO_DEFINE_ERROR(DomainError);
TURBO_DEFINE_ERROR(IndexError);
TURBO_DEFINE_ERROR(ContractError);
TURBO_DEFINE_ERROR(GeometryError);
TURBO_DEFINE_ERROR(ConstraintError);
TURBO_DEFINE_ERROR(ConfigError);
TURBO_DEFINE_ERROR(DataError);
TURBO_DEFINE_ERROR(NumericalError);
TURBO_DEFINE_ERROR(IoError);

#undef TURBO_DEFINE_ERROR

}  // namespace turbo
