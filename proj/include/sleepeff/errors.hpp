#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sleepeff {

// Base of every error the library throws. The CLI maps ConfigError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---- dataset ----

class DegenerateSleepRecord : public Error {
 public:
  DegenerateSleepRecord()
      : Error("degenerate sleep record: minsasleep and minsawake are both 0") {}
};

class SchemaMismatch : public Error {
 public:
  explicit SchemaMismatch(std::string column, const std::string& what = "")
      : Error("schema mismatch on column '" + column + "'" + (what.empty() ? "" : ": " + what)),
        column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::string column, std::string content)
      : Error("parse error at row " + std::to_string(row) + ", column '" + column + "': '" +
              content + "'"),
        row_(row),
        column_(std::move(column)),
        content_(std::move(content)) {}
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }
  const std::string& content() const noexcept { return content_; }

 private:
  std::size_t row_;
  std::string column_;
  std::string content_;
};

class UnknownCategory : public Error {
 public:
  UnknownCategory(std::string feature, std::string label)
      : Error("unknown category '" + label + "' for feature '" + feature + "'"),
        feature_(std::move(feature)),
        label_(std::move(label)) {}
  const std::string& feature() const noexcept { return feature_; }
  const std::string& label() const noexcept { return label_; }

 private:
  std::string feature_;
  std::string label_;
};

class EmptyJoin : public Error {
 public:
  EmptyJoin() : Error("merge produced zero rows") {}
};

class EmptyResult : public Error {
 public:
  EmptyResult() : Error("filtering removed every row") {}
};

class InvalidFraction : public Error {
 public:
  explicit InvalidFraction(double f)
      : Error("test fraction must lie strictly inside (0, 1), got " + std::to_string(f)) {}
};

// ---- synthdata ----

class InvalidConfig : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// ---- neuralnet ----

class ShapeError : public Error {
 public:
  using Error::Error;
};

class UnknownArchitecture : public Error {
 public:
  explicit UnknownArchitecture(const std::string& id) : Error("unknown architecture '" + id + "'") {}
};

class DivergedError : public Error {
 public:
  DivergedError(std::size_t epoch, std::size_t batch)
      : Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
              ", batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

// ---- forest / experiment ----

class EmptyInput : public Error {
 public:
  explicit EmptyInput(const std::string& where) : Error("empty input: " + where) {}
};

class KTooLarge : public Error {
 public:
  KTooLarge(std::size_t k, std::size_t p)
      : Error("k = " + std::to_string(k) + " exceeds feature count " + std::to_string(p)) {}
};

class LengthMismatch : public Error {
 public:
  LengthMismatch(std::size_t a, std::size_t b)
      : Error("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

// Wraps a failure of one model inside a suite run.
class ModelError : public Error {
 public:
  ModelError(std::string model, const std::string& what)
      : Error("model " + model + ": " + what), model_(std::move(model)) {}
  const std::string& model() const noexcept { return model_; }

 private:
  std::string model_;
};

}  // namespace sleepeff
