#pragma once

#include <stdexcept>
#include <string>

namespace mfuse {

/// Bad or unreadable configuration; carries the 1-based line when the
/// problem is tied to one.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg
                                    : msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Unreadable, truncated or incompatible checkpoint file.
class CheckpointError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// User-supplied inputs disagree with each other (image size mismatch,
/// missing pair member, and so on).
class InputMismatchError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mfuse
