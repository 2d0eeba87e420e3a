#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace art2music {

// Base for every error raised by the toolkit. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, unreadable or unwritable files.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed container or stream contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class TruncatedError : public FormatError {
 public:
  TruncatedError(std::size_t offset, std::size_t wanted)
      : FormatError("truncated stream at offset " + std::to_string(offset) + " (needed " +
                    std::to_string(wanted) + " more bytes)"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnsupportedCodecError : public FormatError {
 public:
  UnsupportedCodecError(std::uint16_t tag, const std::string& detail);

  std::uint16_t tag() const noexcept { return tag_; }

 private:
  std::uint16_t tag_;
};

// Shape or dimension disagreement between two operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Arguments outside an operation's declared domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

std::string dimension_message(const std::string& what, std::size_t expected, std::size_t actual);

}  // namespace art2music
