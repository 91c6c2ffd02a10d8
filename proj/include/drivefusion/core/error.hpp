#pragma once

#include <stdexcept>
#include <string>

namespace df {

// Bad flags, unknown presets, malformed requests. CLI maps this to exit 1.
class UsageError : public std::runtime_error {
public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing/corrupt files, integrity mismatches, shape errors. CLI maps this to exit 2.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace df
