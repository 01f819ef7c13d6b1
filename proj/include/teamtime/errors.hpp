#pragma once

#include <stdexcept>
#include <string>

namespace teamtime {

// Argument outside an operation's mathematical domain (p outside (0,1),
// empty dataset, sample outside a family's support).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// All samples equal: three of the four families have no proper fit.
class DegenerateDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed simulation, scheduling or service configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Expected waiting cost has no finite minimizer.
class UnboundedOptimumError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace teamtime
