#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace alsubset {

using SampleId = std::uint64_t;
using ClassIndex = int;

/// Raised for malformed configuration files, unknown keys and bad CLI input.
/// The CLI maps it to exit code 1; every other exception maps to 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace alsubset
