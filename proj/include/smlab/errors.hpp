#pragma once

#include <stdexcept>
#include <string>

namespace smlab {

// Invalid configuration values or unknown keys. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse: shape mismatches, stale caches, stepping a finished episode.
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

// NaN/Inf produced at a checked boundary. CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace smlab
