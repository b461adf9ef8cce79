#pragma once

#include <stdexcept>
#include <string>

namespace drmpc {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Incompatible matrix/vector dimensions between related arguments.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar or structural argument is outside its valid range.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Covariance factorization failed (matrix not numerically PSD).
class CholeskyError : public Error {
 public:
  using Error::Error;
};

/// A scenario window or trajectory request exceeds the stored data.
class WindowError : public Error {
 public:
  using Error::Error;
};

/// File content disagrees with the declared schema or sidecar metadata.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Filesystem-level read/write failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// An iterative routine exhausted its budget without reaching tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// The (A, B) pair failed the controllability rank test.
class ControllabilityError : public Error {
 public:
  using Error::Error;
};

/// Input tightening produced an empty box.
class TighteningError : public Error {
 public:
  using Error::Error;
};

/// A controller-dependent operation was called with an incompatible
/// controller kind.
class ControllerKindError : public Error {
 public:
  using Error::Error;
};

/// Candidate shifting needs a terminal policy the configuration lacks.
class TerminalPolicyError : public Error {
 public:
  using Error::Error;
};

/// Configuration file is malformed, has unknown keys, or invalid values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A result was requested from a solve that did not return Optimal.
class NotSolvedError : public Error {
 public:
  using Error::Error;
};

}  // namespace drmpc
