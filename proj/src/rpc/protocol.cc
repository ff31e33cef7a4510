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
#include "knowbank/rpc/protocol.h"

#include <cstring>

#include "knowbank/core/codec.h"

#include "knowbank/core/overloaded.h"

namespace knowbank::rpc {

namespace {

void write_keys(ByteWriter& w, const std::vector<KnowledgeKey>& keys) {
  w.put_u32(static_cast<uint32_t>(keys.size()));
  for (const auto& k : keys) write_key(w, k);
}

std::vector<KnowledgeKey> read_keys(ByteReader& r) {
  const uint32_t n = r.get_u32();
  // Each key needs at least four bytes; reject counts the payload cannot hold.
  if (static_cast<size_t>(n) * 4 > r.remaining()) {
    throw_error(ErrorCode::kMalformedPayload, "key count exceeds payload");
  }
  std::vector<KnowledgeKey> keys;
  keys.reserve(n);
  for (uint32_t i = 0; i < n; ++i) keys.push_back(read_key(r));
  return keys;
}

bool read_flag(ByteReader& r) {
  const uint8_t f = r.get_u8();
  if (f > 1) throw_error(ErrorCode::kMalformedPayload, "bad presence flag");
  return f == 1;
}

Metric read_metric(ByteReader& r) {
  const uint8_t m = r.get_u8();
  if (m > 1) throw_error(ErrorCode::kMalformedPayload, "bad metric");
  return static_cast<Metric>(m);
}

void check_count(uint32_t n, size_t min_bytes, const ByteReader& r) {
  if (static_cast<size_t>(n) * min_bytes > r.remaining()) {
    throw_error(ErrorCode::kMalformedPayload, "list count exceeds payload");
  }
}

}  // namespace

bool is_known_type(uint8_t t) { return (t >= 1 && t <= 8) || t == 255; }

const char* msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::kLookupEmb: return "LookupEmb";
    case MsgType::kSetEmb: return "SetEmb";
    case MsgType::kUpdateGrad: return "UpdateGrad";
    case MsgType::kLookupFeat: return "LookupFeat";
    case MsgType::kSetFeat: return "SetFeat";
    case MsgType::kKnn: return "Knn";
    case MsgType::kStats: return "Stats";
    case MsgType::kTick: return "Tick";
    case MsgType::kError: return "Error";
  }
  return "Unknown";
}

std::string encode_frame(MsgType type, uint64_t request_id, std::string_view payload) {
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put_u8(kProtocolVersion);
  w.put_u8(static_cast<uint8_t>(type));
  w.put_u64(request_id);
  w.put_u32(static_cast<uint32_t>(payload.size()));
  w.put_bytes(payload);
  return std::move(w).bytes();
}

FrameHeader parse_header(std::string_view bytes) {
  if (bytes.size() != kHeaderSize) {
    throw_error(ErrorCode::kMalformedPayload, "short frame header");
  }
  ByteReader r(bytes);
  FrameHeader h;
  std::memcpy(h.magic, r.get_bytes(4).data(), 4);
  h.version = r.get_u8();
  h.type = r.get_u8();
  h.request_id = r.get_u64();
  h.payload_len = r.get_u32();
  return h;
}

void validate_header(const FrameHeader& h) {
  if (std::string_view(h.magic, 4) != kMagic) {
    throw_error(ErrorCode::kMalformedPayload, "bad frame magic");
  }
  if (h.version != kProtocolVersion) {
    throw_error(ErrorCode::kVersionMismatch,
                "protocol version " + std::to_string(h.version) + " not supported");
  }
  if (!is_known_type(h.type)) {
    throw_error(ErrorCode::kMalformedPayload, "unknown message type " + std::to_string(h.type));
  }
}

MsgType request_type(const Request& req) {
  return std::visit(Overloaded{
                        [](const LookupEmbRequest&) { return MsgType::kLookupEmb; },
                        [](const SetEmbRequest&) { return MsgType::kSetEmb; },
                        [](const UpdateGradRequest&) { return MsgType::kUpdateGrad; },
                        [](const LookupFeatRequest&) { return MsgType::kLookupFeat; },
                        [](const SetFeatRequest&) { return MsgType::kSetFeat; },
                        [](const KnnRequest&) { return MsgType::kKnn; },
                        [](const StatsRequest&) { return MsgType::kStats; },
                        [](const TickRequest&) { return MsgType::kTick; },
                    },
                    req);
}

MsgType response_type(const Response& resp) {
  return std::visit(Overloaded{
                        [](const LookupEmbResponse&) { return MsgType::kLookupEmb; },
                        [](const AckResponse& a) { return a.type; },
                        [](const LookupFeatResponse&) { return MsgType::kLookupFeat; },
                        [](const KnnResponse&) { return MsgType::kKnn; },
                        [](const StatsResponse&) { return MsgType::kStats; },
                        [](const TickResponse&) { return MsgType::kTick; },
                        [](const ErrorResponse&) { return MsgType::kError; },
                    },
                    resp);
}

std::string encode_request(const Request& req) {
  ByteWriter w;
  std::visit(Overloaded{
                 [&](const LookupEmbRequest& r) {
                   write_keys(w, r.keys);
                   w.put_u8(r.create_missing ? 1 : 0);
                 },
                 [&](const SetEmbRequest& r) {
                   write_key(w, r.key);
                   write_vector(w, r.vector);
                   w.put_u64(r.version);
                 },
                 [&](const UpdateGradRequest& r) {
                   write_key(w, r.key);
                   write_vector(w, r.gradient);
                   w.put_f32(r.learning_rate);
                   w.put_str16(r.source);
                 },
                 [&](const LookupFeatRequest& r) { write_keys(w, r.keys); },
                 [&](const SetFeatRequest& r) {
                   write_key(w, r.key);
                   write_record(w, r.record);
                 },
                 [&](const KnnRequest& r) {
                   w.put_str16(r.ns);
                   write_vector(w, r.query);
                   w.put_u32(r.k);
                   w.put_u8(static_cast<uint8_t>(r.metric));
                 },
                 [](const StatsRequest&) {},
                 [](const TickRequest&) {},
             },
             req);
  return std::move(w).bytes();
}

Request decode_request(MsgType type, std::string_view payload) {
  ByteReader r(payload);
  Request out;
  switch (type) {
    case MsgType::kLookupEmb: {
      LookupEmbRequest q;
      q.keys = read_keys(r);
      q.create_missing = read_flag(r);
      out = std::move(q);
      break;
    }
    case MsgType::kSetEmb: {
      SetEmbRequest q;
      q.key = read_key(r);
      q.vector = read_vector(r);
      q.version = r.get_u64();
      out = std::move(q);
      break;
    }
    case MsgType::kUpdateGrad: {
      UpdateGradRequest q;
      q.key = read_key(r);
      q.gradient = read_vector(r);
      q.learning_rate = r.get_f32();
      q.source = r.get_str16();
      out = std::move(q);
      break;
    }
    case MsgType::kLookupFeat: {
      LookupFeatRequest q;
      q.keys = read_keys(r);
      out = std::move(q);
      break;
    }
    case MsgType::kSetFeat: {
      SetFeatRequest q;
      q.key = read_key(r);
      q.record = read_record(r);
      out = std::move(q);
      break;
    }
    case MsgType::kKnn: {
      KnnRequest q;
      q.ns = r.get_str16();
      q.query = read_vector(r);
      q.k = r.get_u32();
      q.metric = read_metric(r);
      out = std::move(q);
      break;
    }
    case MsgType::kStats:
      out = StatsRequest{};
      break;
    case MsgType::kTick:
      out = TickRequest{};
      break;
    default:
      throw_error(ErrorCode::kMalformedPayload,
                  std::string("no request encoding for ") + msg_type_name(type));
  }
  r.expect_end("request payload");
  return out;
}

std::string encode_response(const Response& resp) {
  ByteWriter w;
  std::visit(Overloaded{
                 [&](const LookupEmbResponse& r) {
                   w.put_u32(static_cast<uint32_t>(r.entries.size()));
                   for (const auto& e : r.entries) {
                     w.put_u8(e ? 1 : 0);
                     if (e) write_entry(w, *e);
                   }
                 },
                 [](const AckResponse&) {},
                 [&](const LookupFeatResponse& r) {
                   w.put_u32(static_cast<uint32_t>(r.records.size()));
                   for (const auto& rec : r.records) {
                     w.put_u8(rec ? 1 : 0);
                     if (rec) write_record(w, *rec);
                   }
                 },
                 [&](const KnnResponse& r) {
                   w.put_u32(static_cast<uint32_t>(r.hits.size()));
                   for (const auto& h : r.hits) {
                     write_key(w, h.key);
                     w.put_f64(h.score);
                   }
                 },
                 [&](const StatsResponse& r) {
                   w.put_u32(static_cast<uint32_t>(r.shards.size()));
                   for (const auto& s : r.shards) {
                     w.put_u64(s.entries);
                     w.put_u64(s.pending_keys);
                     w.put_u64(s.clock);
                     w.put_u64(s.bytes);
                   }
                 },
                 [&](const TickResponse& r) { w.put_u64(r.flushed); },
                 [&](const ErrorResponse& r) {
                   w.put_u16(static_cast<uint16_t>(r.code));
                   w.put_str16(r.message.size() > 0xffff ? r.message.substr(0, 0xffff)
                                                         : r.message);
                 },
             },
             resp);
  return std::move(w).bytes();
}

Response decode_response(MsgType type, std::string_view payload) {
  ByteReader r(payload);
  Response out;
  switch (type) {
    case MsgType::kLookupEmb: {
      LookupEmbResponse p;
      const uint32_t n = r.get_u32();
      check_count(n, 1, r);
      for (uint32_t i = 0; i < n; ++i) {
        if (read_flag(r)) {
          p.entries.emplace_back(read_entry(r));
        } else {
          p.entries.emplace_back();
        }
      }
      out = std::move(p);
      break;
    }
    case MsgType::kSetEmb:
    case MsgType::kUpdateGrad:
    case MsgType::kSetFeat:
      out = AckResponse{type};
      break;
    case MsgType::kLookupFeat: {
      LookupFeatResponse p;
      const uint32_t n = r.get_u32();
      check_count(n, 1, r);
      for (uint32_t i = 0; i < n; ++i) {
        if (read_flag(r)) {
          p.records.emplace_back(read_record(r));
        } else {
          p.records.emplace_back();
        }
      }
      out = std::move(p);
      break;
    }
    case MsgType::kKnn: {
      KnnResponse p;
      const uint32_t n = r.get_u32();
      check_count(n, 12, r);
      for (uint32_t i = 0; i < n; ++i) {
        KnnHit h;
        h.key = read_key(r);
        h.score = r.get_f64();
        p.hits.push_back(std::move(h));
      }
      out = std::move(p);
      break;
    }
    case MsgType::kStats: {
      StatsResponse p;
      const uint32_t n = r.get_u32();
      check_count(n, 32, r);
      for (uint32_t i = 0; i < n; ++i) {
        ShardStats s;
        s.entries = r.get_u64();
        s.pending_keys = r.get_u64();
        s.clock = r.get_u64();
        s.bytes = r.get_u64();
        p.shards.push_back(s);
      }
      out = std::move(p);
      break;
    }
    case MsgType::kTick:
      out = TickResponse{r.get_u64()};
      break;
    case MsgType::kError: {
      ErrorResponse p;
      p.code = static_cast<ErrorCode>(r.get_u16());
      p.message = r.get_str16();
      out = std::move(p);
      break;
    }
  }
  r.expect_end("response payload");
  return out;
}

std::string request_frame(uint64_t request_id, const Request& req) {
  return encode_frame(request_type(req), request_id, encode_request(req));
}

std::string response_frame(uint64_t request_id, const Response& resp) {
  return encode_frame(response_type(resp), request_id, encode_response(resp));
}

}  // namespace knowbank::rpc
