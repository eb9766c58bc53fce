#pragma once

#include <stdexcept>
#include <string>

namespace iclft {

/// Process exit codes, one per error class surfaced by the CLI.
enum class ExitCode : int {
  ok = 0,
  failure = 1,
  usage = 2,
  parse = 3,
  validation = 4,
  io = 5,
  training = 6,
  config = 7,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::failure)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Malformed input: bad JSON, bad JSONL line, truncated binary file.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what, ExitCode::parse) {}
};

/// Well-formed input that breaks a domain invariant.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(what, ExitCode::validation) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what, ExitCode::io) {}
};

/// Non-finite loss or an otherwise unrecoverable optimizer state.
class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what)
      : Error(what, ExitCode::training) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::config) {}
};

}  // namespace iclft
