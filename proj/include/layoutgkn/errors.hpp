#pragma once

#include <stdexcept>
#include <string>

namespace lgkn {

// Precondition on an argument violated (bad shape, k <= 0, delta < 1, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input file could not be parsed. Carries the 1-based record (line) index.
class MalformedInput : public std::runtime_error {
 public:
  MalformedInput(std::size_t record, const std::string& what)
      : std::runtime_error("record " + std::to_string(record) + ": " + what), record_(record) {}
  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

// A request the library refuses on purpose (size caps, stale index, split overlap).
class Refused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss or kernel value.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lgkn
