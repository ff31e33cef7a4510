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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "knowbank/core/types.h"

namespace knowbank {

enum class NamespaceKind : uint8_t { kFeatures = 0, kEmbeddings = 1 };
enum class InitKind : uint8_t { kZeros = 0, kUniform = 1 };
enum class Metric : uint8_t { kCosine = 0, kNegL2 = 1 };

struct NamespaceConfig {
  std::string name;
  NamespaceKind kind = NamespaceKind::kEmbeddings;
  uint32_t dim = 0;  // embeddings only
  InitKind init = InitKind::kZeros;
  float init_scale = 0.0f;  // uniform(-scale, scale)
  uint64_t init_seed = 0;
  // Logical ticks a cached delta may wait before tick_expiry() flushes it.
  uint64_t flush_expiry_ticks = 0;
  // Same rule against the steady clock, used by tick_expiry_wall().
  uint64_t flush_expiry_ms = 0;
  double outlier_factor = 3.0;

  bool operator==(const NamespaceConfig&) const = default;
};

struct BankOptions {
  uint32_t num_shards = 1;
  // Deterministic mode flushes pending deltas of every key a kNN scan visits.
  // Networked deployments scan stored values as they are.
  bool flush_on_scan = true;
};

struct ShardStats {
  uint64_t entries = 0;
  uint64_t pending_keys = 0;
  uint64_t clock = 0;
  uint64_t bytes = 0;

  bool operator==(const ShardStats&) const = default;
};

struct KnnHit {
  KnowledgeKey key;
  double score = 0.0;

  bool operator==(const KnnHit&) const = default;
};

struct FlushResult {
  size_t consumed = 0;   // deltas removed from the queue
  size_t discarded = 0;  // of those, rejected as outliers
  Vector applied;        // mean of surviving deltas, subtracted from the entry
};

// Clock-free view of the stored content, ordered by key. Two banks holding
// the same values and versions compare equal regardless of shard count.
struct BankContents {
  std::map<KnowledgeKey, std::pair<Vector, uint64_t>> embeddings;
  std::map<KnowledgeKey, FeatureRecord> features;

  bool operator==(const BankContents&) const = default;
};

// Sharded in-memory store for features and embeddings with lazy gradient
// aggregation and exact kNN. Safe for concurrent use: mutations of one key are
// serialized, distinct keys and shards proceed in parallel.
class KnowledgeBank {
 public:
  KnowledgeBank(std::vector<NamespaceConfig> namespaces, BankOptions options);
  ~KnowledgeBank();

  KnowledgeBank(const KnowledgeBank&) = delete;
  KnowledgeBank& operator=(const KnowledgeBank&) = delete;

  void set_embedding(const KnowledgeKey& key, std::span<const float> vector, uint64_t version);

  // Flushes each key, then returns its entry. Missing keys are created from
  // the namespace default (version 0) unless create_missing is false, in which
  // case they come back empty.
  std::vector<std::optional<EmbeddingEntry>> lookup_embeddings(
      std::span<const KnowledgeKey> keys, bool create_missing = true);

  // Enqueues learning_rate * gradient without touching the entry.
  void update_gradient(const KnowledgeKey& key, std::span<const float> gradient,
                       float learning_rate, std::string_view source);

  std::optional<FlushResult> flush_key(const KnowledgeKey& key);

  // Advances every shard clock by one and flushes keys whose oldest delta is
  // at least flush_expiry_ticks old. Returns the number of keys flushed.
  uint64_t tick_expiry();
  uint64_t tick_expiry_wall(int64_t now_ms);

  void set_features(const KnowledgeKey& key, FeatureRecord record);
  std::vector<std::optional<FeatureRecord>> lookup_features(
      std::span<const KnowledgeKey> keys) const;

  std::vector<KnnHit> knn_search(std::string_view ns, std::span<const float> query, uint32_t k,
                                 Metric metric);

  std::vector<ShardStats> stats() const;
  size_t pending_count(const KnowledgeKey& key) const;

  const NamespaceConfig& namespace_config(std::string_view name) const;
  std::vector<NamespaceConfig> namespaces() const;
  uint32_t num_shards() const { return options_.num_shards; }
  const BankOptions& options() const { return options_; }

  BankContents contents() const;

  // One file per shard, "shard-<index>.ckb", each starting with magic "CKB1".
  void save_snapshot(const std::filesystem::path& dir) const;
  static std::unique_ptr<KnowledgeBank> load_snapshot(const std::filesystem::path& dir,
                                                      BankOptions options);

 private:
  struct Slot;
  struct FeatureSlot;
  struct Store;
  struct Shard;

  Shard& shard_for(const KnowledgeKey& key);
  const Shard& shard_for(const KnowledgeKey& key) const;
  Store& store_for(const KnowledgeKey& key, NamespaceKind kind);
  const Store& store_for(const KnowledgeKey& key, NamespaceKind kind) const;
  // A created entry takes the namespace default. With stamp false the caller
  // stamps ltime itself as part of the same mutation.
  Slot& get_or_create(Shard& shard, Store& store, const KnowledgeKey& key, bool stamp = true);
  std::optional<FlushResult> flush_locked(Shard& shard, const Store& store, Slot& slot);
  Vector default_vector(const NamespaceConfig& cfg, std::string_view id) const;

  BankOptions options_;
  std::map<std::string, NamespaceConfig, std::less<>> configs_;
  std::vector<std::unique_ptr<Shard>> shards_;
};

const char* metric_name(Metric m);
Metric parse_metric(std::string_view name);

}  // namespace knowbank
