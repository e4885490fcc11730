// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "fusekit/error.h"

namespace fusekit {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kIncompatible: return "incompatible";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kMalformedHeader: return "malformed_header";
    case ErrorCode::kBadOffsets: return "bad_offsets";
    case ErrorCode::kUnknownDtype: return "unknown_dtype";
    case ErrorCode::kDuplicateName: return "duplicate_name";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kEvaluator: return "evaluator";
    case ErrorCode::kUndefined: return "undefined";
  }
  return "unknown";
}

int Error::exit_code() const {
  switch (code_) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kIncompatible:
    case ErrorCode::kInfeasible:
      return 2;
    default:
      return 1;
  }
}

}  // namespace fusekit
