#pragma once

#include <stdexcept>
#include <string>

namespace dronos {

enum class ErrorCode {
  InvalidArgument = 1,
  DegenerateOrientation,
  Range,
  Shape,
  CorruptFrame,
  Protocol,
  Parse,
  RecordingTooShort,
  IllegalTransition,
  Config,
  Io,
  Violation,
  Timeout,
};

const char* to_string(ErrorCode code);

// Every recoverable failure raised by the core library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Parse failures carry the index of the offending field (or a JSON path).
class ParseError : public Error {
 public:
  ParseError(int field, const std::string& what)
      : Error(ErrorCode::Parse, what), field_(field) {}
  ParseError(std::string path, const std::string& what)
      : Error(ErrorCode::Parse, what), field_(-1), path_(std::move(path)) {}
  int field() const noexcept { return field_; }
  const std::string& path() const noexcept { return path_; }

 private:
  int field_;
  std::string path_;
};

}  // namespace dronos
