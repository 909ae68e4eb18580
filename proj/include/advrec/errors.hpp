#pragma once

#include <stdexcept>
#include <string>

namespace advrec {

// File could not be opened or read/written.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input text (TSV lines, config files, CSV reports).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration value or an operation requested on data that
// cannot support it (e.g. timestamp split without timestamps).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Binary artifact violates the on-disk format (bad magic, truncation,
// checksum or dimension mismatch). Message names the byte offset.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Training aborted (non-finite loss / gradients). Message carries the
// epoch and batch indices.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent evaluation reports (conflicting rows under one provenance key).
class ReportError : public std::runtime_error {
 public:
  explicit ReportError(const std::string& what) : std::runtime_error(what) {}
};

// CLI-level misuse: missing inputs, unknown keys. Maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace advrec
