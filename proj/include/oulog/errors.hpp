#pragma once

#include <stdexcept>
#include <string>

namespace oulog {

/// Bad input values: non-finite numbers, inconsistent sizes, incompatible config.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of a function (s <= 0 for log-weights, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A path whose regressor energy vanishes, so the least-squares ratios are undefined.
class DegeneratePathError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation needs Brownian increments but the path was not produced by the Euler scheme.
class UnsupportedSchemeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace oulog

namespace oulog {

/// Unknown key, unparsable value or incompatible theorem/parameter combination.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

}  // namespace oulog
