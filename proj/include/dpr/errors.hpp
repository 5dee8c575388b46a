#pragma once

#include <stdexcept>
#include <string>

namespace dpr {

// Dimension or buffer-shape mismatches.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Out-of-domain arguments (tau <= 0, q outside (0,1], bad fractions, ...).
struct ParamError : std::runtime_error {
  explicit ParamError(const std::string& msg) : std::runtime_error(msg) {}
};

// Class index outside [0, K).
struct IndexError : std::runtime_error {
  explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed binary input; carries the byte offset where parsing failed.
struct FormatError : std::runtime_error {
  FormatError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  std::size_t byte_offset;
};

// Non-finite loss or gradient during optimization; carries the step index.
struct TrainingError : std::runtime_error {
  TrainingError(const std::string& msg, long step)
      : std::runtime_error(msg + " (step " + std::to_string(step) + ")"), step_index(step) {}
  long step_index;
};

// Generated dataset failed a generation-time consistency check.
struct GenerationError : std::runtime_error {
  explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Sampling table with no usable mass.
struct DegenerateTableError : std::runtime_error {
  explicit DegenerateTableError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dpr
