#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bdi {

/// Base class for every error raised by the library. Carries the name of the
/// module that raised it and, when relevant, the offending unit ids.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what, std::vector<std::string> ids = {})
      : std::runtime_error(module + ": " + what), module_(std::move(module)), ids_(std::move(ids)) {}

  const std::string& module() const noexcept { return module_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::string module_;
  std::vector<std::string> ids_;
};

class ParseError : public Error {
 public:
  ParseError(std::string module, const std::string& what, long index = -1)
      : Error(std::move(module), what), index_(index) {}
  /// Zero-based feature or row index, -1 when not attributable.
  long index() const noexcept { return index_; }

 private:
  long index_;
};

class DuplicateKeyError : public Error {
 public:
  DuplicateKeyError(std::string module, const std::string& key)
      : Error(std::move(module), "duplicate id '" + key + "'", {key}) {}
};

class GeometryKindError : public Error {
 public:
  GeometryKindError(std::string module, const std::string& id, const std::string& kind)
      : Error(std::move(module), "feature '" + id + "' has non-polygonal geometry " + kind, {id}) {}
};

class GeometryError : public Error {
  using Error::Error;
};

class ConfigError : public Error {
  using Error::Error;
};

/// Precondition violated by the caller (dimension mismatch, too few samples, ...).
class ContractViolation : public Error {
  using Error::Error;
};

class RankError : public Error {
  using Error::Error;
};

class TransportError : public Error {
 public:
  TransportError(std::string module, const std::string& what, int status)
      : Error(std::move(module), what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class ColumnMappingError : public Error {
  using Error::Error;
};

}  // namespace bdi
