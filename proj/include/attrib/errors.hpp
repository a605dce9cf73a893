#pragma once

#include <stdexcept>

namespace attrib {

// Exit-code taxonomy for the CLI: usage errors exit 1, data errors 2,
// numeric divergence 3.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace attrib
