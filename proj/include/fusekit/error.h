// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FUSEKIT_ERROR_H_
#define FUSEKIT_ERROR_H_

#include <stdexcept>
#include <string>

namespace fusekit {

enum class ErrorCode {
  kInvalidArgument,  // precondition on a caller-supplied value
  kIncompatible,     // checkpoints differ in names, dtypes or shapes
  kInfeasible,       // fixture parameters that cannot be realized
  kTruncated,
  kMalformedHeader,
  kBadOffsets,
  kUnknownDtype,
  kDuplicateName,
  kIo,
  kNonFinite,
  kEvaluator,
  kUndefined,  // metric has no value for the given input
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

  // 2 for validation failures, 1 for everything that went wrong at runtime.
  int exit_code() const;

 private:
  ErrorCode code_;
};

}  // namespace fusekit

#endif  // FUSEKIT_ERROR_H_
