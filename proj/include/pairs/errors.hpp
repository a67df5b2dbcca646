#pragma once
// Exception hierarchy. Two bases matter to the CLI exit codes:
// InputError -> 2 (unreadable or malformed input), ConstraintError -> 3
// (a precondition or invariant violated by otherwise well-formed input).

#include <stdexcept>
#include <string>

namespace pairs {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class InputError : public Error {
 public:
  using Error::Error;
};

class ConstraintError : public Error {
 public:
  using Error::Error;
};

class MissingFileError : public InputError {
 public:
  explicit MissingFileError(const std::string& path)
      : InputError("missing file: " + path) {}
};

class MalformedLineError : public InputError {
 public:
  MalformedLineError(const std::string& file, long line, const std::string& why)
      : InputError(file + ":" + std::to_string(line) + ": " + why) {}
};

class InconsistentCountsError : public InputError {
 public:
  explicit InconsistentCountsError(const std::string& why)
      : InputError("inconsistent counts: " + why) {}
};

// Bad magic, truncated stream, non-finite payload values.
class BadFormatError : public InputError {
 public:
  using InputError::InputError;
};

class InvalidSchemaError : public ConstraintError {
 public:
  explicit InvalidSchemaError(const std::string& why)
      : ConstraintError("invalid schema: " + why) {}
};

class DegeneratePairError : public ConstraintError {
 public:
  explicit DegeneratePairError(const std::string& why = "keypoint pair is degenerate")
      : ConstraintError(why) {}
};

class BadAspectError : public ConstraintError {
 public:
  explicit BadAspectError(const std::string& why) : ConstraintError(why) {}
};

class EmptyTensorError : public ConstraintError {
 public:
  explicit EmptyTensorError(const std::string& why = "tensor has zero area")
      : ConstraintError(why) {}
};

class DimensionMismatchError : public ConstraintError {
 public:
  explicit DimensionMismatchError(const std::string& why)
      : ConstraintError("dimension mismatch: " + why) {}
};

class MismatchedIdsError : public ConstraintError {
 public:
  explicit MismatchedIdsError(const std::string& why)
      : ConstraintError("mismatched image ids: " + why) {}
};

class EmptySubsetError : public ConstraintError {
 public:
  EmptySubsetError() : ConstraintError("patch subset is empty") {}
};

class TooLargeError : public ConstraintError {
 public:
  explicit TooLargeError(const std::string& why) : ConstraintError(why) {}
};

class DegenerateSplitError : public ConstraintError {
 public:
  explicit DegenerateSplitError(const std::string& why)
      : ConstraintError(why) {}
};

}  // namespace pairs
