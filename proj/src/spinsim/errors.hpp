#pragma once

#include <stdexcept>
#include <string>

namespace spinsim {

// Invalid parameters, malformed configuration, violated preconditions.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Unstable models, singular solves, infeasible root finds.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace spinsim
