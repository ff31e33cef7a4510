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
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "knowbank/bank/knowledge_bank.h"
#include "knowbank/core/error.h"
#include "knowbank/core/types.h"

namespace knowbank::rpc {

inline constexpr std::string_view kMagic = "CRLS";
inline constexpr uint8_t kProtocolVersion = 1;
inline constexpr size_t kHeaderSize = 18;
inline constexpr size_t kDefaultMaxFrame = 16u << 20;

enum class MsgType : uint8_t {
  kLookupEmb = 1,
  kSetEmb = 2,
  kUpdateGrad = 3,
  kLookupFeat = 4,
  kSetFeat = 5,
  kKnn = 6,
  kStats = 7,
  kTick = 8,
  kError = 255,
};

bool is_known_type(uint8_t t);
const char* msg_type_name(MsgType t);

// Header fields as read off the wire, before any validation.
struct FrameHeader {
  char magic[4] = {'C', 'R', 'L', 'S'};
  uint8_t version = kProtocolVersion;
  uint8_t type = 0;
  uint64_t request_id = 0;
  uint32_t payload_len = 0;
};

std::string encode_frame(MsgType type, uint64_t request_id, std::string_view payload);
// Requires exactly kHeaderSize bytes. Never validates.
FrameHeader parse_header(std::string_view bytes);
// Throws kMalformedPayload (magic, unknown type) or kVersionMismatch.
void validate_header(const FrameHeader& h);

struct LookupEmbRequest {
  std::vector<KnowledgeKey> keys;
  bool create_missing = true;
  bool operator==(const LookupEmbRequest&) const = default;
};
struct SetEmbRequest {
  KnowledgeKey key;
  Vector vector;
  uint64_t version = 0;
  bool operator==(const SetEmbRequest&) const = default;
};
struct UpdateGradRequest {
  KnowledgeKey key;
  Vector gradient;
  float learning_rate = 0.0f;
  std::string source;
  bool operator==(const UpdateGradRequest&) const = default;
};
struct LookupFeatRequest {
  std::vector<KnowledgeKey> keys;
  bool operator==(const LookupFeatRequest&) const = default;
};
struct SetFeatRequest {
  KnowledgeKey key;
  FeatureRecord record;
  bool operator==(const SetFeatRequest&) const = default;
};
struct KnnRequest {
  std::string ns;
  Vector query;
  uint32_t k = 1;
  Metric metric = Metric::kCosine;
  bool operator==(const KnnRequest&) const = default;
};
struct StatsRequest {
  bool operator==(const StatsRequest&) const = default;
};
struct TickRequest {
  bool operator==(const TickRequest&) const = default;
};

using Request = std::variant<LookupEmbRequest, SetEmbRequest, UpdateGradRequest,
                             LookupFeatRequest, SetFeatRequest, KnnRequest, StatsRequest,
                             TickRequest>;

struct LookupEmbResponse {
  std::vector<std::optional<EmbeddingEntry>> entries;
  bool operator==(const LookupEmbResponse&) const = default;
};
// Empty acknowledgement for SetEmb, UpdateGrad and SetFeat.
struct AckResponse {
  MsgType type = MsgType::kSetEmb;
  bool operator==(const AckResponse&) const = default;
};
struct LookupFeatResponse {
  std::vector<std::optional<FeatureRecord>> records;
  bool operator==(const LookupFeatResponse&) const = default;
};
struct KnnResponse {
  std::vector<KnnHit> hits;
  bool operator==(const KnnResponse&) const = default;
};
struct StatsResponse {
  std::vector<ShardStats> shards;
  bool operator==(const StatsResponse&) const = default;
};
struct TickResponse {
  uint64_t flushed = 0;
  bool operator==(const TickResponse&) const = default;
};
struct ErrorResponse {
  ErrorCode code = ErrorCode::kUnknown;
  std::string message;
  bool operator==(const ErrorResponse&) const = default;
};

using Response = std::variant<LookupEmbResponse, AckResponse, LookupFeatResponse, KnnResponse,
                              StatsResponse, TickResponse, ErrorResponse>;

MsgType request_type(const Request& req);
MsgType response_type(const Response& resp);

std::string encode_request(const Request& req);
Request decode_request(MsgType type, std::string_view payload);
std::string encode_response(const Response& resp);
Response decode_response(MsgType type, std::string_view payload);

// Frame helpers over the two encoders.
std::string request_frame(uint64_t request_id, const Request& req);
std::string response_frame(uint64_t request_id, const Response& resp);

}  // namespace knowbank::rpc
