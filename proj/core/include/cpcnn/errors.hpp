#pragma once

#include <stdexcept>
#include <string>

namespace cpcnn {

// Every error thrown by the library derives from Error and carries a short
// machine-readable kind that the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& w) : Error("parameter", w) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error("shape", w) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error("config", w) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error("format", w) {}
};

struct IngestionError : Error {
  explicit IngestionError(const std::string& w) : Error("ingestion", w) {}
};

struct DivergenceError : Error {
  explicit DivergenceError(const std::string& w) : Error("divergence", w) {}
};

struct InternalError : Error {
  explicit InternalError(const std::string& w) : Error("internal", w) {}
};

}  // namespace cpcnn
