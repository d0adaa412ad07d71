#pragma once

#include <stdexcept>
#include <string>

namespace tdbem {

/// Invalid input or violated precondition (bad config, wrong space order, ...).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Failure of a numerical procedure (singular system, non-SPD norm matrix, ...).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tdbem
