// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace datg {

enum class ErrorKind {
  invalid_argument,
  backend_unreachable,
  capability_missing,
  generation_failed,
  classifier_failed,
  non_convergence,
  config,
  io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::backend_unreachable: return "backend-unreachable";
    case ErrorKind::capability_missing: return "capability-missing";
    case ErrorKind::generation_failed: return "generation-failed";
    case ErrorKind::classifier_failed: return "classifier-failed";
    case ErrorKind::non_convergence: return "non-convergence";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

/// Base exception for every failure raised by the library. The kind lets
/// callers (the pipeline in particular) decide between soft and hard failures
/// without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace datg
