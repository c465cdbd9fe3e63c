#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace corpuskit {

// Base of every error the toolkit raises. kind() is the stable error name
// surfaced by the CLI and by language bindings.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

#define CORPUSKIT_DEFINE_ERROR(Name)                                    \
  class Name : public Error {                                           \
  public:                                                               \
    explicit Name(const std::string& what) : Error(#Name, what) {}      \
  }

CORPUSKIT_DEFINE_ERROR(EmptyDocument);
CORPUSKIT_DEFINE_ERROR(EmptyCorpus);
CORPUSKIT_DEFINE_ERROR(ResourceError);
CORPUSKIT_DEFINE_ERROR(ConfigError);
CORPUSKIT_DEFINE_ERROR(CalibrationError);
CORPUSKIT_DEFINE_ERROR(SignatureMismatch);
CORPUSKIT_DEFINE_ERROR(ConsistencyError);
CORPUSKIT_DEFINE_ERROR(TrainError);
CORPUSKIT_DEFINE_ERROR(NotPaginated);
CORPUSKIT_DEFINE_ERROR(DecodeError);
CORPUSKIT_DEFINE_ERROR(ModelFormatError);
CORPUSKIT_DEFINE_ERROR(IoError);

#undef CORPUSKIT_DEFINE_ERROR

// Invalid UTF-8 in text handed to normalization.
class IngestError : public Error {
public:
  IngestError(std::size_t byte_offset, const std::string& what)
      : Error("IngestError", what + " at byte offset " + std::to_string(byte_offset)),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
  std::size_t byte_offset_;
};

// Malformed JSONL record; line numbers are 1-based.
class RecordError : public Error {
public:
  RecordError(std::size_t line, const std::string& what)
      : Error("RecordError", "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

// A plan stage failed; kind() stays "StageError" and cause_kind() names the
// underlying error.
class StageError : public Error {
public:
  StageError(std::size_t index, std::string stage_kind, std::string cause_kind, const std::string& what)
      : Error("StageError", "stage " + std::to_string(index) + " (" + stage_kind + "): " + what),
        index_(index),
        stage_kind_(std::move(stage_kind)),
        cause_kind_(std::move(cause_kind)) {}

  std::size_t index() const noexcept { return index_; }
  const std::string& stage_kind() const noexcept { return stage_kind_; }
  const std::string& cause_kind() const noexcept { return cause_kind_; }

private:
  std::size_t index_;
  std::string stage_kind_;
  std::string cause_kind_;
};

}  // namespace corpuskit
