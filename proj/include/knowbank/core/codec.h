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
#include <span>
#include <string>
#include <string_view>

#include "knowbank/core/types.h"

namespace knowbank {

// Little-endian append-only encoder. Strings are u16 length-prefixed, lists
// u32 length-prefixed.
class ByteWriter {
 public:
  void put_u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void put_u16(uint16_t v);
  void put_u32(uint32_t v);
  void put_u64(uint64_t v);
  void put_f32(float v);
  void put_f64(double v);
  void put_bytes(std::string_view bytes) { buf_.append(bytes); }
  // Throws Error(kInvalidArgument) for strings longer than 65535 bytes.
  void put_str16(std::string_view s);

  const std::string& bytes() const& { return buf_; }
  std::string bytes() && { return std::move(buf_); }
  size_t size() const { return buf_.size(); }

 private:
  std::string buf_;
};

// Bounds-checked decoder over a borrowed buffer. Every read past the end
// throws Error(kMalformedPayload).
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  uint8_t get_u8();
  uint16_t get_u16();
  uint32_t get_u32();
  uint64_t get_u64();
  float get_f32();
  double get_f64();
  std::string_view get_bytes(size_t n);
  std::string get_str16();

  size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }
  // Throws unless every byte was consumed.
  void expect_end(std::string_view what) const;

 private:
  std::string_view take(size_t n);

  std::string_view bytes_;
  size_t pos_ = 0;
};

// u32 dim, then dim little-endian IEEE-754 binary32 values.
std::string encode_vector(std::span<const float> v);
Vector decode_vector(std::string_view bytes);

void write_vector(ByteWriter& w, std::span<const float> v);
// Rejects truncation and non-finite values.
Vector read_vector(ByteReader& r);

void write_key(ByteWriter& w, const KnowledgeKey& key);
KnowledgeKey read_key(ByteReader& r);

void write_entry(ByteWriter& w, const EmbeddingEntry& e);
EmbeddingEntry read_entry(ByteReader& r);

void write_record(ByteWriter& w, const FeatureRecord& rec);
FeatureRecord read_record(ByteReader& r);

void write_matrix(ByteWriter& w, const Matrix& m);
Matrix read_matrix(ByteReader& r);

// Checkpoint file body: "CKPT", u64 step, u32 param count, then per param a
// u16-prefixed name, u32 rows, u32 cols and row-major f32 data. A metadata
// trailer (u32 count, str16 pairs) follows only when metadata is non-empty.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

}  // namespace knowbank
