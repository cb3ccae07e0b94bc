#pragma once

#include <stdexcept>
#include <string>

namespace caselink {

/// Bad input: malformed files, dangling ids, invalid configuration.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values or failed numerical checks.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace caselink
