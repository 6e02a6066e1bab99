// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <stdexcept>
#include <string>

namespace mtnet {

enum class ErrorCode {
  InvalidArgument = 1,
  Shape,
  Config,
  Io,
  Checkpoint,
  Numeric,
  Untraceable,
  Internal,
};

/// Single exception type for the core. The code survives the trip through
/// the C API as an mtnet_status value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace mtnet
