#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kar {

// Base of every exception thrown by kar_core.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on an argument was violated (empty query, k == 0, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A referenced entity (node, document, template, strategy) does not exist.
class NotFound : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input file. `line` is 1-based, 0 when the
// problem is not tied to a single line.
class InputError : public Error {
 public:
  InputError(std::string path, std::size_t line, const std::string& what)
      : Error(format(path, line, what)), path_(std::move(path)), line_(line) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& path, std::size_t line, const std::string& what) {
    if (line == 0) return path + ": " + what;
    return path + ":" + std::to_string(line) + ": " + what;
  }

  std::string path_;
  std::size_t line_;
};

// Transport or protocol failure talking to a remote backend.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, int attempts, bool retryable)
      : Error(what + " (after " + std::to_string(attempts) + " attempt" +
              (attempts == 1 ? "" : "s") + ")"),
        attempts_(attempts),
        retryable_(retryable) {}

  int attempts() const noexcept { return attempts_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  int attempts_;
  bool retryable_;
};

// A pipeline stage failed; carries the stage name ("kar.parse", "agr.refine", ...).
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace kar
