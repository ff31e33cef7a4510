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
#include "knowbank/core/codec.h"

#include <bit>
#include <cmath>

#include "knowbank/core/error.h"
#include "knowbank/core/math.h"

namespace knowbank {

void ByteWriter::put_u16(uint16_t v) {
  put_u8(static_cast<uint8_t>(v));
  put_u8(static_cast<uint8_t>(v >> 8));
}

void ByteWriter::put_u32(uint32_t v) {
  for (int i = 0; i < 4; ++i) put_u8(static_cast<uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_u64(uint64_t v) {
  for (int i = 0; i < 8; ++i) put_u8(static_cast<uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_f32(float v) { put_u32(std::bit_cast<uint32_t>(v)); }

void ByteWriter::put_f64(double v) { put_u64(std::bit_cast<uint64_t>(v)); }

void ByteWriter::put_str16(std::string_view s) {
  if (s.size() > 0xFFFF) {
    throw_error(ErrorCode::kInvalidArgument, "string too long for u16 prefix");
  }
  put_u16(static_cast<uint16_t>(s.size()));
  put_bytes(s);
}

std::string_view ByteReader::take(size_t n) {
  if (remaining() < n) {
    throw_error(ErrorCode::kMalformedPayload, "truncated input: need " + std::to_string(n) +
                                                  " bytes, have " + std::to_string(remaining()));
  }
  std::string_view out = bytes_.substr(pos_, n);
  pos_ += n;
  return out;
}

uint8_t ByteReader::get_u8() { return static_cast<uint8_t>(take(1)[0]); }

uint16_t ByteReader::get_u16() {
  std::string_view b = take(2);
  return static_cast<uint16_t>(static_cast<uint8_t>(b[0]) |
                               (static_cast<uint16_t>(static_cast<uint8_t>(b[1])) << 8));
}

uint32_t ByteReader::get_u32() {
  std::string_view b = take(4);
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(b[i]);
  return v;
}

uint64_t ByteReader::get_u64() {
  std::string_view b = take(8);
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(b[i]);
  return v;
}

float ByteReader::get_f32() { return std::bit_cast<float>(get_u32()); }

double ByteReader::get_f64() { return std::bit_cast<double>(get_u64()); }

std::string_view ByteReader::get_bytes(size_t n) { return take(n); }

std::string ByteReader::get_str16() {
  const uint16_t n = get_u16();
  return std::string(take(n));
}

void ByteReader::expect_end(std::string_view what) const {
  if (!at_end()) {
    throw_error(ErrorCode::kMalformedPayload,
                std::to_string(remaining()) + " trailing bytes after " + std::string(what));
  }
}

void write_vector(ByteWriter& w, std::span<const float> v) {
  check_finite(v, "encoded vector");
  w.put_u32(static_cast<uint32_t>(v.size()));
  for (float x : v) w.put_f32(x);
}

Vector read_vector(ByteReader& r) {
  const uint32_t dim = r.get_u32();
  if (static_cast<size_t>(dim) * 4 > r.remaining()) {
    throw_error(ErrorCode::kMalformedPayload,
                "vector of dim " + std::to_string(dim) + " exceeds remaining input");
  }
  Vector v(dim);
  for (uint32_t i = 0; i < dim; ++i) {
    v[i] = r.get_f32();
    if (!std::isfinite(v[i])) {
      throw_error(ErrorCode::kMalformedPayload, "non-finite value in encoded vector");
    }
  }
  return v;
}

std::string encode_vector(std::span<const float> v) {
  ByteWriter w;
  write_vector(w, v);
  return std::move(w).bytes();
}

Vector decode_vector(std::string_view bytes) {
  ByteReader r(bytes);
  Vector v = read_vector(r);
  r.expect_end("vector");
  return v;
}

void write_key(ByteWriter& w, const KnowledgeKey& key) {
  w.put_str16(key.ns);
  w.put_str16(key.id);
}

KnowledgeKey read_key(ByteReader& r) {
  KnowledgeKey key;
  key.ns = r.get_str16();
  key.id = r.get_str16();
  return key;
}

void write_entry(ByteWriter& w, const EmbeddingEntry& e) {
  write_vector(w, e.vector);
  w.put_u64(e.version);
  w.put_u64(e.ltime);
}

EmbeddingEntry read_entry(ByteReader& r) {
  EmbeddingEntry e;
  e.vector = read_vector(r);
  e.version = r.get_u64();
  e.ltime = r.get_u64();
  return e;
}

void write_record(ByteWriter& w, const FeatureRecord& rec) {
  w.put_u32(static_cast<uint32_t>(rec.neighbors.size()));
  for (const Neighbor& n : rec.neighbors) {
    write_key(w, n.key);
    w.put_f32(n.weight);
  }
  w.put_u8(rec.label_dist ? 1 : 0);
  if (rec.label_dist) write_vector(w, *rec.label_dist);
  w.put_u8(rec.raw_features ? 1 : 0);
  if (rec.raw_features) write_vector(w, *rec.raw_features);
  w.put_u8(static_cast<uint8_t>(rec.label_source));
}

namespace {

bool read_flag(ByteReader& r) {
  const uint8_t f = r.get_u8();
  if (f > 1) throw_error(ErrorCode::kMalformedPayload, "presence flag must be 0 or 1");
  return f == 1;
}

}  // namespace

FeatureRecord read_record(ByteReader& r) {
  FeatureRecord rec;
  const uint32_t n = r.get_u32();
  // Each neighbor needs at least 8 bytes; reject absurd counts up front.
  if (static_cast<size_t>(n) * 8 > r.remaining()) {
    throw_error(ErrorCode::kMalformedPayload, "neighbor count exceeds remaining input");
  }
  rec.neighbors.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    Neighbor nb;
    nb.key = read_key(r);
    nb.weight = r.get_f32();
    rec.neighbors.push_back(std::move(nb));
  }
  if (read_flag(r)) rec.label_dist = read_vector(r);
  if (read_flag(r)) rec.raw_features = read_vector(r);
  const uint8_t src = r.get_u8();
  if (src > static_cast<uint8_t>(LabelSource::kInferred)) {
    throw_error(ErrorCode::kMalformedPayload, "unknown label source");
  }
  rec.label_source = static_cast<LabelSource>(src);
  return rec;
}

void write_matrix(ByteWriter& w, const Matrix& m) {
  w.put_u32(m.rows);
  w.put_u32(m.cols);
  for (float x : m.data) w.put_f32(x);
}

Matrix read_matrix(ByteReader& r) {
  const uint32_t rows = r.get_u32();
  const uint32_t cols = r.get_u32();
  const size_t n = static_cast<size_t>(rows) * cols;
  if (n * 4 > r.remaining()) {
    throw_error(ErrorCode::kMalformedPayload, "matrix data exceeds remaining input");
  }
  Matrix m(rows, cols);
  for (size_t i = 0; i < n; ++i) {
    m.data[i] = r.get_f32();
    if (!std::isfinite(m.data[i])) {
      throw_error(ErrorCode::kMalformedPayload, "non-finite matrix value");
    }
  }
  return m;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.put_bytes("CKPT");
  w.put_u64(ckpt.step);
  w.put_u32(static_cast<uint32_t>(ckpt.params.size()));
  for (const auto& [name, m] : ckpt.params) {
    w.put_str16(name);
    write_matrix(w, m);
  }
  if (!ckpt.metadata.empty()) {
    w.put_u32(static_cast<uint32_t>(ckpt.metadata.size()));
    for (const auto& [k, v] : ckpt.metadata) {
      w.put_str16(k);
      w.put_str16(v);
    }
  }
  return std::move(w).bytes();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.get_bytes(4) != "CKPT") {
    throw_error(ErrorCode::kMalformedPayload, "bad checkpoint magic");
  }
  Checkpoint ckpt;
  ckpt.step = r.get_u64();
  const uint32_t count = r.get_u32();
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_str16();
    Matrix m = read_matrix(r);
    if (!ckpt.params.emplace(std::move(name), std::move(m)).second) {
      throw_error(ErrorCode::kMalformedPayload, "duplicate parameter name");
    }
  }
  if (!r.at_end()) {
    const uint32_t n = r.get_u32();
    for (uint32_t i = 0; i < n; ++i) {
      std::string k = r.get_str16();
      ckpt.metadata[std::move(k)] = r.get_str16();
    }
  }
  r.expect_end("checkpoint");
  return ckpt;
}

}  // namespace knowbank
