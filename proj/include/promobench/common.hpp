#pragma once

#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace promobench {

// Error taxonomy. The CLI maps exception types to exit codes:
//   ConfigError / UsageError -> 1, DataError -> 2, ShapeError / TrainError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration. Carries the full list of violations, not just the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}
  explicit ConfigError(const std::string& single) : ConfigError(std::vector<std::string>{single}) {}

  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::ostringstream os;
    os << "configuration invalid (" << v.size() << " violation" << (v.size() == 1 ? "" : "s") << ")";
    for (const auto& s : v) os << "\n  - " << s;
    return os.str();
  }
  std::vector<std::string> violations_;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class TrainError : public Error {
 public:
  using Error::Error;
};

class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Process-wide default worker count (CLI --threads overrides it).
int default_thread_count();
void set_default_thread_count(int n);

// Runs fn(begin, end) over contiguous chunks of [0, n). Each index is handled
// by exactly one chunk, so callers that keep every element independent of the
// others get results identical to a serial run regardless of thread count.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn, int n_threads = 0);

}  // namespace promobench
