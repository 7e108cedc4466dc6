#pragma once

#include <stdexcept>
#include <string>

namespace utk {

// Error categories map onto CLI exit codes: config=1, io/format=2, integrity=3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input data (bad record, bad magic, truncated file).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A structural guarantee of the packed format was violated.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace utk
