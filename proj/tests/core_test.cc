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
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <set>

#include "doctest.h"
#include "knowbank/core/codec.h"
#include "knowbank/core/error.h"
#include "knowbank/core/hash.h"
#include "knowbank/core/math.h"

namespace kb = knowbank;

namespace {

// Reference FNV-1a 64, written against the published constants.
uint64_t ref_fnv1a64(const std::vector<uint8_t>& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (uint8_t b : bytes) {
    h = h ^ b;
    h = h * 0x100000001b3ULL;
  }
  return h;
}

std::vector<uint8_t> key_bytes(const kb::KnowledgeKey& k) {
  std::vector<uint8_t> out(k.ns.begin(), k.ns.end());
  out.push_back(0);
  out.insert(out.end(), k.id.begin(), k.id.end());
  return out;
}

kb::Vector random_vector(std::mt19937_64& rng, size_t dim) {
  std::normal_distribution<float> nd(0.0f, 3.0f);
  kb::Vector v(dim);
  for (float& x : v) x = nd(rng);
  return v;
}

std::string hex(const std::string& s) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned char c : s) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 15]);
  }
  return out;
}

}  // namespace

TEST_CASE("fnv1a64 matches published vectors") {
  CHECK(kb::fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(kb::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(kb::fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("shard_of") {
  const kb::KnowledgeKey a{"", "a"};
  CHECK(kb::shard_of(a, 1) == 0);
  CHECK(kb::key_hash(a) == ref_fnv1a64({0x00, 'a'}));
  CHECK(kb::key_hash(a) == 0x08326707b4eb37daULL);
  CHECK(kb::shard_of(a, 4) == 2);
  const kb::KnowledgeKey n{"node_emb", "n17"};
  CHECK(kb::key_hash(n) == 0xbea6d749f425c18cULL);
  CHECK(kb::shard_of(n, 8) == 4);
  CHECK(kb::shard_of(n, 8) == kb::shard_of(n, 8));
}

TEST_CASE("shard_of agrees with reference and partitions key sets") {
  std::mt19937_64 rng(7);
  for (uint32_t shards : {1u, 2u, 3u, 4u, 8u, 13u}) {
    std::vector<std::set<kb::KnowledgeKey>> parts(shards);
    for (int i = 0; i < 500; ++i) {
      kb::KnowledgeKey k{i % 2 ? "emb" : "feat", "id" + std::to_string(rng() % 100000)};
      const uint32_t s = kb::shard_of(k, shards);
      REQUIRE(s < shards);
      CHECK(s == ref_fnv1a64(key_bytes(k)) % shards);
      parts[s].insert(k);
    }
    for (uint32_t i = 0; i < shards; ++i) {
      for (uint32_t j = i + 1; j < shards; ++j) {
        for (const auto& k : parts[i]) CHECK(parts[j].count(k) == 0);
      }
    }
  }
}

TEST_CASE("vector encoding is bit exact") {
  CHECK(hex(kb::encode_vector(kb::Vector{})) == "00000000");
  CHECK(hex(kb::encode_vector(kb::Vector{1.0f})) == "010000000000803f");
  CHECK(hex(kb::encode_vector(kb::Vector{-2.0f, 0.5f})) == "02000000000000c00000003f");
}

TEST_CASE("vector round trip") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const kb::Vector v = random_vector(rng, rng() % 33);
    const kb::Vector back = kb::decode_vector(kb::encode_vector(v));
    REQUIRE(back.size() == v.size());
    CHECK(std::memcmp(back.data(), v.data(), v.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("vector decode rejects bad input") {
  const std::string ok = kb::encode_vector(kb::Vector{1.0f, 2.0f});
  for (size_t cut = 0; cut < ok.size(); ++cut) {
    CHECK_THROWS_AS(kb::decode_vector(ok.substr(0, cut)), kb::Error);
  }
  std::string nan = ok;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + 4, &q, 4);
  try {
    kb::decode_vector(nan);
    FAIL("expected throw");
  } catch (const kb::Error& e) {
    CHECK(e.code() == kb::ErrorCode::kMalformedPayload);
  }
  CHECK_THROWS_AS(kb::decode_vector(ok + "x"), kb::Error);
  CHECK_THROWS_AS(kb::encode_vector(kb::Vector{q}), kb::Error);
}

TEST_CASE("cosine and l2sq") {
  CHECK(kb::l2sq(kb::Vector{0, 0}, kb::Vector{3, 4}) == 25.0);
  CHECK(kb::cosine(kb::Vector{1, 0}, kb::Vector{0, 1}) == 0.0);
  CHECK(kb::cosine(kb::Vector{0, 0}, kb::Vector{0, 1}) == 0.0);
  CHECK_THROWS_AS(kb::cosine(kb::Vector{1}, kb::Vector{1, 2}), kb::Error);
  CHECK_THROWS_AS(kb::l2sq(kb::Vector{1}, kb::Vector{1, 2}), kb::Error);

  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const size_t dim = 1 + rng() % 16;
    const kb::Vector a = random_vector(rng, dim);
    const kb::Vector b = random_vector(rng, dim);
    CHECK(kb::cosine(a, a) == doctest::Approx(1.0).epsilon(1e-9));
    const double c = kb::cosine(a, b);
    CHECK(c >= -1.0 - 1e-6);
    CHECK(c <= 1.0 + 1e-6);
    CHECK(std::abs(c - kb::cosine(b, a)) <= 1e-7);
    CHECK(kb::l2sq(a, b) > 0.0);
    CHECK(kb::l2sq(a, a) == 0.0);
  }
}

TEST_CASE("record validation") {
  kb::FeatureRecord rec;
  rec.neighbors.push_back({{"n", "b"}, 1.0f});
  CHECK_NOTHROW(kb::validate_record(rec));
  rec.label_dist = kb::Vector{0.5f, 0.6f};
  try {
    kb::validate_record(rec);
    FAIL("expected throw");
  } catch (const kb::Error& e) {
    CHECK(e.code() == kb::ErrorCode::kMalformedRecord);
  }
  rec.label_dist = kb::Vector{0.25f, 0.75f};
  CHECK_NOTHROW(kb::validate_record(rec));
  rec.neighbors[0].weight = -1.0f;
  CHECK_THROWS_AS(kb::validate_record(rec), kb::Error);
  rec.neighbors[0].weight = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(kb::validate_record(rec), kb::Error);
}

TEST_CASE("record, entry and checkpoint round trips") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    kb::FeatureRecord rec;
    const size_t nn = rng() % 5;
    for (size_t j = 0; j < nn; ++j) {
      rec.neighbors.push_back({{"ns" + std::to_string(j), "k" + std::to_string(rng() % 1000)},
                               static_cast<float>(rng() % 1000) / 100.0f});
    }
    if (rng() % 2) {
      const size_t c = 1 + rng() % 5;
      kb::Vector p(c, 0.0f);
      p[rng() % c] = 1.0f;
      rec.label_dist = p;
    }
    if (rng() % 2) rec.raw_features = random_vector(rng, rng() % 9);
    rec.label_source = static_cast<kb::LabelSource>(rng() % 4);

    kb::ByteWriter w;
    kb::write_record(w, rec);
    kb::EmbeddingEntry e{random_vector(rng, rng() % 9), rng(), rng()};
    kb::write_entry(w, e);
    kb::ByteReader r(w.bytes());
    CHECK(kb::read_record(r) == rec);
    CHECK(kb::read_entry(r) == e);
    CHECK(r.at_end());

    kb::Checkpoint ck;
    ck.step = rng();
    const size_t np = rng() % 4;
    for (size_t j = 0; j < np; ++j) {
      kb::Matrix m(1 + rng() % 4, 1 + rng() % 4);
      for (float& x : m.data) x = static_cast<float>(rng() % 2001) / 1000.0f - 1.0f;
      ck.params["p" + std::to_string(j)] = m;
    }
    if (rng() % 2) ck.metadata["variant"] = "graph_reg";
    CHECK(kb::decode_checkpoint(kb::encode_checkpoint(ck)) == ck);
  }
}

TEST_CASE("checkpoint layout") {
  kb::Checkpoint ck;
  ck.step = 7;
  ck.params["W"] = kb::Matrix(1, 1, 1.0f);
  CHECK(hex(kb::encode_checkpoint(ck)) ==
        "434b5054"                  // CKPT
        "0700000000000000"          // step
        "01000000"                  // count
        "0100" "57"                 // name
        "01000000" "01000000"       // rows, cols
        "0000803f");
  const std::string bytes = kb::encode_checkpoint(ck);
  CHECK_THROWS_AS(kb::decode_checkpoint(bytes.substr(0, bytes.size() - 1)), kb::Error);
  CHECK_THROWS_AS(kb::decode_checkpoint("XKPT" + bytes.substr(4)), kb::Error);
}
