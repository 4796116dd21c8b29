#pragma once

// Error taxonomy shared by the library and the CLI.
//
// DomainError: the inputs parse but the requested computation is not defined
// for them (reducible chain, non-simple eigenvalue, resource cap, ...).
// Maps to CLI exit status 1 with a machine-readable payload.
//
// UsageError: the request itself is malformed (missing file, bad flag value).
// Maps to CLI exit status 2.

#include <stdexcept>
#include <string>
#include <utility>

namespace treechain {

class TreechainError : public std::runtime_error {
 public:
  TreechainError(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  // Short machine-readable tag, e.g. "reducible", "non_simple_eigenvalue".
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

class DomainError : public TreechainError {
 public:
  using TreechainError::TreechainError;
};

class UsageError : public TreechainError {
 public:
  using TreechainError::TreechainError;
};

// Resource caps (node-count limits, series caps) are domain errors with a
// dedicated kind so callers can distinguish "mathematically refused" from
// "too big to certify".
inline DomainError resource_limit(const std::string& message) {
  return DomainError("resource_limit", message);
}

}  // namespace treechain
