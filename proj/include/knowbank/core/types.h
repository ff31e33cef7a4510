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

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace knowbank {

// Dense embedding or feature vector. 32-bit storage everywhere; reductions
// accumulate in double.
using Vector = std::vector<float>;

// Identifies one instance, node or item. Equality and ordering are byte-wise
// on (ns, id).
struct KnowledgeKey {
  std::string ns;
  std::string id;

  auto operator<=>(const KnowledgeKey&) const = default;
  bool operator==(const KnowledgeKey&) const = default;
};

struct KnowledgeKeyHash {
  size_t operator()(const KnowledgeKey& key) const;
};

struct EmbeddingEntry {
  Vector vector;
  uint64_t version = 0;  // step of the producer that wrote the value
  uint64_t ltime = 0;    // shard clock at the last mutation

  bool operator==(const EmbeddingEntry&) const = default;
};

struct Neighbor {
  KnowledgeKey key;
  float weight = 0.0f;

  bool operator==(const Neighbor&) const = default;
};

// Where the label distribution of a FeatureRecord came from.
enum class LabelSource : uint8_t {
  kNone = 0,
  kObserved = 1,
  kMined = 2,
  kInferred = 3,
};

struct FeatureRecord {
  std::vector<Neighbor> neighbors;
  std::optional<Vector> label_dist;
  std::optional<Vector> raw_features;
  LabelSource label_source = LabelSource::kNone;

  bool operator==(const FeatureRecord&) const = default;
};

// Throws Error(kMalformedRecord) when weights are negative or non-finite, or
// when label_dist is not a probability vector (sum 1 +/- 1e-6).
void validate_record(const FeatureRecord& record);

struct GradientDelta {
  Vector delta;  // learning_rate * gradient, scaled at enqueue time
  std::string source;
  uint64_t ltime = 0;
  int64_t wall_ms = 0;  // steady-clock arrival; only used by wall expiry
};

template <typename T>
struct BasicMatrix {
  uint32_t rows = 0;
  uint32_t cols = 0;
  std::vector<T> data;  // row-major

  BasicMatrix() = default;
  BasicMatrix(uint32_t r, uint32_t c, T fill = T{})
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  T& operator()(uint32_t r, uint32_t c) { return data[static_cast<size_t>(r) * cols + c]; }
  const T& operator()(uint32_t r, uint32_t c) const {
    return data[static_cast<size_t>(r) * cols + c];
  }
  size_t size() const { return data.size(); }

  bool operator==(const BasicMatrix&) const = default;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

struct Checkpoint {
  uint64_t step = 0;
  std::map<std::string, Matrix> params;
  std::map<std::string, std::string> metadata;

  bool operator==(const Checkpoint&) const = default;
};

}  // namespace knowbank
