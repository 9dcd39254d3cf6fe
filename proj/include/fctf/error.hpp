#pragma once

#include <stdexcept>
#include <string>

namespace fctf {

// Exception taxonomy shared by every module. The C API maps each type onto
// one fctf_status code, so new error kinds must be added there as well.

/// Caller passed a value outside an operation's contract.
class InvalidArgument : public std::invalid_argument {
 public:
  explicit InvalidArgument(const std::string& what) : std::invalid_argument(what) {}
};

/// Filesystem or serialization failure. The message always names the path.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// A required artifact or state is missing (untrained network, absent
/// checkpoint, corpus spec mismatch without --force, ...).
class PreconditionError : public std::runtime_error {
 public:
  explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

/// A loss or activation went non-finite during training.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Checks an argument precondition.
inline void require(bool cond, const std::string& message) {
  if (!cond) throw InvalidArgument(message);
}

}  // namespace fctf
