// Copyright 2026 The Knowbank Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "knowbank/core/error.h"

namespace knowbank {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknown: return "Unknown";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kUnknownNamespace: return "UnknownNamespace";
    case ErrorCode::kMalformedPayload: return "MalformedPayload";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kConnectionLost: return "ConnectionLost";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code),
      detail_(message) {}

void throw_error(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace knowbank
