#pragma once

#include <stdexcept>
#include <string>

namespace spgd {

// Bad arguments or preconditions violated by the caller.
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical routine could not produce a finite, converged result.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent or unparseable configuration.
class InvalidConfig : public std::runtime_error {
 public:
  explicit InvalidConfig(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace spgd
