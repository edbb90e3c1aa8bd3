#pragma once

#include <stdexcept>
#include <string>

namespace rga {

/// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Cosine-type quantity requested on a vector whose norm is below 1e-12.
class DegenerateVectorError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure talking to an external gradient-oracle process. `raw()` keeps
/// the offending line (or empty when none was received).
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, std::string raw = {})
      : std::runtime_error(raw.empty() ? what : what + " [raw: " + raw + "]"), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// The victim does not implement the requested operation.
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rga
