#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hybridnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor dimensions disagree with what an op requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Convolution / pooling geometry does not produce an integral output size.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Input data violates a value contract (label range, empty mask, non-positive depth).
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. calling backward on a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced or supplied where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed binary or text file. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace hybridnet
