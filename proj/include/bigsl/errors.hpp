#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bigsl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& what)
      : Error("malformed record at line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyAfterFilter : public Error {
 public:
  EmptyAfterFilter() : Error("no user survives filtering") {}
};

class SequenceTooShort : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class NonScalarLoss : public Error {
 public:
  using Error::Error;
};

class ZeroVectorRow : public Error {
 public:
  explicit ZeroVectorRow(std::size_t row) : Error("zero vector at row " + std::to_string(row)) {}
};

class TooFewPoints : public Error {
 public:
  TooFewPoints(std::size_t k, std::size_t n)
      : Error("cannot form " + std::to_string(k) + " clusters from " + std::to_string(n) + " points") {}
};

class NotANeighbor : public Error {
 public:
  using Error::Error;
};

class ViewCountTooSmall : public Error {
 public:
  using Error::Error;
};

class EmptySequence : public Error {
 public:
  EmptySequence() : Error("empty sequence") {}
  explicit EmptySequence(const std::string& what) : Error(what) {}
};

class InvalidTarget : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(std::size_t batch)
      : Error("non-finite loss at batch " + std::to_string(batch)), batch_(batch) {}
  std::size_t batch() const { return batch_; }

 private:
  std::size_t batch_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace bigsl
