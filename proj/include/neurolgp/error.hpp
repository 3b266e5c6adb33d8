#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace neurolgp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Genotype without a defined output, or with no effective code.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or activations during training.
class TrainingError : public Error {
 public:
  TrainingError(std::size_t epoch, std::size_t batch, const std::string& what)
      : Error("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ": " + what),
        epoch_(epoch),
        batch_(batch) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public FitError {
 public:
  using FitError::FitError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace neurolgp
