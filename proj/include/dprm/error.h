#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dprm {

enum class ErrorCode {
  kParse,
  kEmptyGraph,
  kContract,
  kBounds,
  kAlignment,
  kTokenization,
  kTransport,
  kEnumerationTooLarge,
  kNotReconstructible,
  kNotApplicable,
  kExtraction,
  kNumeric,
  kNoViableCandidate,
  kEngine,
  kUnsupported,
  kIo,
};

const char* error_code_name(ErrorCode code);

// Base class for every domain error raised by the library. The CLI maps these
// to exit code 1.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorCode::kParse,
              "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ExtractionError : public Error {
 public:
  ExtractionError(std::size_t step, const std::string& message)
      : Error(ErrorCode::kExtraction,
              "step " + std::to_string(step) + ": " + message),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class TransportError : public Error {
 public:
  TransportError(int status, const std::string& message)
      : Error(ErrorCode::kTransport, message), status_(status) {}

  // HTTP status, or 0 when no response was received.
  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace dprm
