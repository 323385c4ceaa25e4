#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ptrack {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class FileNotFound : public Error {
 public:
  using Error::Error;
};

class InvalidState : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file. `offset` is the byte position where reading
/// failed.
class CorruptFile : public Error {
 public:
  CorruptFile(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// File written by an incompatible format version.
class Incompatible : public Error {
 public:
  using Error::Error;
};

/// Checkpoint holds a different parameter type than requested.
class TypeMismatch : public Error {
 public:
  using Error::Error;
};

/// Non-finite values encountered during optimization.
class TrainingFault : public Error {
 public:
  TrainingFault(const std::string& what, std::int64_t step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

}  // namespace ptrack
