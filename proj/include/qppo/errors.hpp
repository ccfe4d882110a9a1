#pragma once

#include <stdexcept>
#include <string>

namespace qppo {

/// Invalid configuration or mismatched shapes.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Operation called outside its contract (step after done, empty targets...).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

/// A non-finite value reached a place that cannot absorb it.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qppo
