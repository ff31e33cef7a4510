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
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace knowbank {

// Stable numeric codes; they travel inside rpc Error frames.
enum class ErrorCode : uint16_t {
  kUnknown = 0,
  kInvalidArgument = 1,
  kDimensionMismatch = 2,
  kNonFinite = 3,
  kUnknownNamespace = 4,
  kMalformedPayload = 5,
  kMalformedRecord = 6,
  kVersionMismatch = 7,
  kTimeout = 8,
  kConnectionLost = 9,
  kConfigError = 10,
  kIoError = 11,
  kSchemaMismatch = 12,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const { return code_; }
  // Message without the "<CodeName>: " prefix that what() carries.
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void throw_error(ErrorCode code, const std::string& message);

}  // namespace knowbank
