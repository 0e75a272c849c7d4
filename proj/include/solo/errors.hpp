#pragma once

#include <stdexcept>
#include <string>

namespace solo {

// Error categories; the CLI maps these onto its exit codes.
enum class ErrorKind {
  Config,           // bad config file / flag values
  Format,           // malformed or unsupported file contents
  UnsupportedFormat,
  DegenerateInput,  // silent clip, empty slice, ... caller decides skip/keep
  Synthesis,
  Split,
  Training,
  Evaluation,
  Io,
};

class SoloError : public std::runtime_error {
 public:
  SoloError(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& msg) {
  throw SoloError(kind, msg);
}

}  // namespace solo
