#pragma once

#include <stdexcept>
#include <string>

namespace ecnu {

/// Base of every error raised by the library. `kind()` selects the CLI exit code.
class Error : public std::runtime_error {
 public:
  enum class Kind { kContract, kDimension, kIndex, kParse, kData, kIo, kLoad, kTraining };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(Kind::kContract, what) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(Kind::kDimension, what) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& what) : Error(Kind::kIndex, what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(Kind::kParse, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(Kind::kData, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(Kind::kIo, what) {}
};

class LoadError : public Error {
 public:
  explicit LoadError(const std::string& what) : Error(Kind::kLoad, what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error(Kind::kTraining, what) {}
};

}  // namespace ecnu
