#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lkreg {

// Error categories map onto CLI exit codes: config 2, data 3, numeric 4.
// usage_error covers API misuse (caller bugs) and maps to config as well.

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class usage_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

using index_t = std::int64_t;

}  // namespace lkreg
