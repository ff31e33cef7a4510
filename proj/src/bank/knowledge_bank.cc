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
#include "knowbank/bank/knowledge_bank.h"

#include <algorithm>
#include <cmath>
#include <chrono>
#include <fstream>
#include <sstream>

#include "knowbank/core/codec.h"
#include "knowbank/core/error.h"
#include "knowbank/core/hash.h"
#include "knowbank/core/math.h"

namespace knowbank {

struct KnowledgeBank::Slot {
  std::mutex mu;
  EmbeddingEntry entry;
  std::vector<GradientDelta> pending;
};

struct KnowledgeBank::FeatureSlot {
  std::mutex mu;
  FeatureRecord record;
};

struct KnowledgeBank::Store {
  const NamespaceConfig* config = nullptr;
  mutable std::shared_mutex mu;
  std::unordered_map<std::string, std::unique_ptr<Slot>> embeddings;
  std::unordered_map<std::string, std::unique_ptr<FeatureSlot>> features;

  // Pointers stay valid for the store's lifetime; slots are never erased.
  std::vector<std::pair<std::string, Slot*>> embedding_slots() const {
    std::shared_lock lock(mu);
    std::vector<std::pair<std::string, Slot*>> out;
    out.reserve(embeddings.size());
    for (const auto& [id, slot] : embeddings) out.emplace_back(id, slot.get());
    return out;
  }
};

struct KnowledgeBank::Shard {
  uint32_t index = 0;
  std::atomic<uint64_t> clock{0};
  std::atomic<uint64_t> entries{0};
  std::atomic<uint64_t> pending_keys{0};
  std::atomic<uint64_t> bytes{0};
  std::map<std::string, Store, std::less<>> stores;

  uint64_t next_ltime() { return clock.fetch_add(1); }
};

namespace {

constexpr std::string_view kSnapshotMagic = "CKB1";

size_t entry_bytes(const std::string& id, const EmbeddingEntry& e) {
  return id.size() + e.vector.size() * sizeof(float) + 16;
}

size_t record_bytes(const std::string& id, const FeatureRecord& rec) {
  ByteWriter w;
  write_record(w, rec);
  return id.size() + w.size();
}

int64_t steady_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void check_id(const KnowledgeKey& key) {
  if (key.id.empty()) throw_error(ErrorCode::kInvalidArgument, "empty key id");
}

bool hit_before(const KnnHit& a, const KnnHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.key < b.key;
}

}  // namespace

const char* metric_name(Metric m) {
  return m == Metric::kCosine ? "cosine" : "neg_l2";
}

Metric parse_metric(std::string_view name) {
  if (name == "cosine") return Metric::kCosine;
  if (name == "neg_l2") return Metric::kNegL2;
  throw_error(ErrorCode::kConfigError, "unknown metric '" + std::string(name) + "'");
}

KnowledgeBank::KnowledgeBank(std::vector<NamespaceConfig> namespaces, BankOptions options)
    : options_(options) {
  if (options_.num_shards == 0) throw_error(ErrorCode::kConfigError, "num_shards must be >= 1");
  for (NamespaceConfig& cfg : namespaces) {
    if (cfg.name.empty()) throw_error(ErrorCode::kConfigError, "namespace without a name");
    if (cfg.kind == NamespaceKind::kEmbeddings && cfg.dim == 0) {
      throw_error(ErrorCode::kConfigError, "embedding namespace '" + cfg.name + "' needs dim > 0");
    }
    if (!(cfg.outlier_factor > 0.0)) {
      throw_error(ErrorCode::kConfigError, "outlier_factor must be > 0");
    }
    std::string name = cfg.name;
    if (!configs_.emplace(std::move(name), std::move(cfg)).second) {
      throw_error(ErrorCode::kConfigError, "duplicate namespace");
    }
  }
  shards_.reserve(options_.num_shards);
  for (uint32_t i = 0; i < options_.num_shards; ++i) {
    auto shard = std::make_unique<Shard>();
    shard->index = i;
    for (const auto& [name, cfg] : configs_) {
      shard->stores[name].config = &cfg;
    }
    shards_.push_back(std::move(shard));
  }
}

KnowledgeBank::~KnowledgeBank() = default;

const NamespaceConfig& KnowledgeBank::namespace_config(std::string_view name) const {
  auto it = configs_.find(name);
  if (it == configs_.end()) {
    throw_error(ErrorCode::kUnknownNamespace, "unknown namespace '" + std::string(name) + "'");
  }
  return it->second;
}

std::vector<NamespaceConfig> KnowledgeBank::namespaces() const {
  std::vector<NamespaceConfig> out;
  for (const auto& [name, cfg] : configs_) out.push_back(cfg);
  return out;
}

KnowledgeBank::Shard& KnowledgeBank::shard_for(const KnowledgeKey& key) {
  return *shards_[shard_of(key, options_.num_shards)];
}

const KnowledgeBank::Shard& KnowledgeBank::shard_for(const KnowledgeKey& key) const {
  return *shards_[shard_of(key, options_.num_shards)];
}

KnowledgeBank::Store& KnowledgeBank::store_for(const KnowledgeKey& key, NamespaceKind kind) {
  const Store& s = std::as_const(*this).store_for(key, kind);
  return const_cast<Store&>(s);
}

const KnowledgeBank::Store& KnowledgeBank::store_for(const KnowledgeKey& key,
                                                     NamespaceKind kind) const {
  const NamespaceConfig& cfg = namespace_config(key.ns);
  if (cfg.kind != kind) {
    throw_error(ErrorCode::kInvalidArgument,
                "namespace '" + key.ns + "' does not hold " +
                    (kind == NamespaceKind::kEmbeddings ? "embeddings" : "features"));
  }
  check_id(key);
  return shard_for(key).stores.find(key.ns)->second;
}

Vector KnowledgeBank::default_vector(const NamespaceConfig& cfg, std::string_view id) const {
  Vector v(cfg.dim, 0.0f);
  if (cfg.init == InitKind::kUniform && cfg.init_scale > 0.0f) {
    uint64_t state = cfg.init_seed ^ fnv1a64(id);
    for (float& x : v) {
      const double u = static_cast<double>(splitmix64(state) >> 40) * 0x1.0p-24;
      x = static_cast<float>((2.0 * u - 1.0) * cfg.init_scale);
    }
  }
  return v;
}

KnowledgeBank::Slot& KnowledgeBank::get_or_create(Shard& shard, Store& store,
                                                  const KnowledgeKey& key, bool stamp) {
  {
    std::shared_lock lock(store.mu);
    auto it = store.embeddings.find(key.id);
    if (it != store.embeddings.end()) return *it->second;
  }
  std::unique_lock lock(store.mu);
  auto [it, inserted] = store.embeddings.try_emplace(key.id);
  if (inserted) {
    auto slot = std::make_unique<Slot>();
    slot->entry.vector = default_vector(*store.config, key.id);
    slot->entry.version = 0;
    if (stamp) slot->entry.ltime = shard.next_ltime();
    shard.entries.fetch_add(1);
    shard.bytes.fetch_add(entry_bytes(key.id, slot->entry));
    it->second = std::move(slot);
  }
  return *it->second;
}

void KnowledgeBank::set_embedding(const KnowledgeKey& key, std::span<const float> vector,
                                  uint64_t version) {
  Store& store = store_for(key, NamespaceKind::kEmbeddings);
  check_same_dim(vector.size(), store.config->dim, "set_embedding");
  check_finite(vector, "embedding");
  Shard& shard = shard_for(key);
  Slot& slot = get_or_create(shard, store, key, false);
  std::lock_guard lock(slot.mu);
  slot.entry.vector.assign(vector.begin(), vector.end());
  slot.entry.version = std::max(slot.entry.version, version);
  if (!slot.pending.empty()) {
    slot.pending.clear();
    shard.pending_keys.fetch_sub(1);
  }
  slot.entry.ltime = shard.next_ltime();
}

std::optional<FlushResult> KnowledgeBank::flush_locked(Shard& shard, const Store& store,
                                                       Slot& slot) {
  if (slot.pending.empty()) return std::nullopt;
  const size_t n = slot.pending.size();
  const size_t dim = slot.entry.vector.size();

  std::vector<bool> keep(n, true);
  size_t discarded = 0;
  if (n >= 3) {
    std::vector<double> norms(n);
    for (size_t i = 0; i < n; ++i) norms[i] = l2norm(slot.pending[i].delta);
    std::vector<double> sorted = norms;
    std::sort(sorted.begin(), sorted.end());
    const double median =
        n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    if (median > 0.0) {
      const double limit = store.config->outlier_factor * median;
      for (size_t i = 0; i < n; ++i) {
        if (norms[i] > limit) {
          keep[i] = false;
          ++discarded;
        }
      }
    }
  }

  FlushResult result;
  result.consumed = n;
  result.discarded = discarded;
  result.applied.assign(dim, 0.0f);
  const size_t survivors = n - discarded;
  if (survivors > 0) {
    std::vector<double> mean(dim, 0.0);
    for (size_t i = 0; i < n; ++i) {
      if (!keep[i]) continue;
      for (size_t d = 0; d < dim; ++d) mean[d] += slot.pending[i].delta[d];
    }
    for (size_t d = 0; d < dim; ++d) {
      mean[d] /= static_cast<double>(survivors);
      result.applied[d] = static_cast<float>(mean[d]);
      slot.entry.vector[d] = static_cast<float>(static_cast<double>(slot.entry.vector[d]) - mean[d]);
    }
  }
  slot.pending.clear();
  shard.pending_keys.fetch_sub(1);
  slot.entry.ltime = shard.next_ltime();
  return result;
}

std::vector<std::optional<EmbeddingEntry>> KnowledgeBank::lookup_embeddings(
    std::span<const KnowledgeKey> keys, bool create_missing) {
  if (keys.empty()) throw_error(ErrorCode::kInvalidArgument, "lookup with no keys");
  std::vector<std::optional<EmbeddingEntry>> out;
  out.reserve(keys.size());
  for (const KnowledgeKey& key : keys) {
    Store& store = store_for(key, NamespaceKind::kEmbeddings);
    Shard& shard = shard_for(key);
    Slot* slot = nullptr;
    if (create_missing) {
      slot = &get_or_create(shard, store, key);
    } else {
      std::shared_lock lock(store.mu);
      auto it = store.embeddings.find(key.id);
      if (it != store.embeddings.end()) slot = it->second.get();
    }
    if (slot == nullptr) {
      out.emplace_back();
      continue;
    }
    std::lock_guard lock(slot->mu);
    flush_locked(shard, store, *slot);
    out.emplace_back(slot->entry);
  }
  return out;
}

void KnowledgeBank::update_gradient(const KnowledgeKey& key, std::span<const float> gradient,
                                    float learning_rate, std::string_view source) {
  Store& store = store_for(key, NamespaceKind::kEmbeddings);
  check_same_dim(gradient.size(), store.config->dim, "update_gradient");
  check_finite(gradient, "gradient");
  if (!(learning_rate > 0.0f) || !std::isfinite(learning_rate)) {
    throw_error(ErrorCode::kInvalidArgument, "learning_rate must be finite and > 0");
  }
  GradientDelta delta;
  delta.delta.resize(gradient.size());
  for (size_t i = 0; i < gradient.size(); ++i) delta.delta[i] = learning_rate * gradient[i];
  check_finite(delta.delta, "scaled gradient");
  delta.source = std::string(source);
  delta.wall_ms = steady_now_ms();

  Shard& shard = shard_for(key);
  Slot& slot = get_or_create(shard, store, key);
  std::lock_guard lock(slot.mu);
  delta.ltime = shard.next_ltime();
  if (slot.pending.empty()) shard.pending_keys.fetch_add(1);
  slot.pending.push_back(std::move(delta));
}

std::optional<FlushResult> KnowledgeBank::flush_key(const KnowledgeKey& key) {
  Store& store = store_for(key, NamespaceKind::kEmbeddings);
  Shard& shard = shard_for(key);
  Slot* slot = nullptr;
  {
    std::shared_lock lock(store.mu);
    auto it = store.embeddings.find(key.id);
    if (it == store.embeddings.end()) return std::nullopt;
    slot = it->second.get();
  }
  std::lock_guard lock(slot->mu);
  return flush_locked(shard, store, *slot);
}

uint64_t KnowledgeBank::tick_expiry() {
  uint64_t flushed = 0;
  for (auto& shard : shards_) {
    const uint64_t now = shard->clock.fetch_add(1) + 1;
    for (auto& [name, store] : shard->stores) {
      if (store.config->kind != NamespaceKind::kEmbeddings) continue;
      for (auto& [id, slot] : store.embedding_slots()) {
        std::lock_guard lock(slot->mu);
        if (slot->pending.empty()) continue;
        const uint64_t oldest = slot->pending.front().ltime;
        if (now - oldest >= store.config->flush_expiry_ticks) {
          flush_locked(*shard, store, *slot);
          ++flushed;
        }
      }
    }
  }
  return flushed;
}

uint64_t KnowledgeBank::tick_expiry_wall(int64_t now_ms) {
  uint64_t flushed = 0;
  for (auto& shard : shards_) {
    for (auto& [name, store] : shard->stores) {
      if (store.config->kind != NamespaceKind::kEmbeddings) continue;
      for (auto& [id, slot] : store.embedding_slots()) {
        std::lock_guard lock(slot->mu);
        if (slot->pending.empty()) continue;
        const int64_t age = now_ms - slot->pending.front().wall_ms;
        if (age >= static_cast<int64_t>(store.config->flush_expiry_ms)) {
          flush_locked(*shard, store, *slot);
          ++flushed;
        }
      }
    }
  }
  return flushed;
}

void KnowledgeBank::set_features(const KnowledgeKey& key, FeatureRecord record) {
  Store& store = store_for(key, NamespaceKind::kFeatures);
  validate_record(record);
  Shard& shard = shard_for(key);
  FeatureSlot* slot = nullptr;
  {
    std::unique_lock lock(store.mu);
    auto [it, inserted] = store.features.try_emplace(key.id);
    if (inserted) {
      it->second = std::make_unique<FeatureSlot>();
      shard.entries.fetch_add(1);
    }
    slot = it->second.get();
  }
  std::lock_guard lock(slot->mu);
  const size_t old_bytes = slot->record == FeatureRecord{} ? 0 : record_bytes(key.id, slot->record);
  slot->record = std::move(record);
  const size_t new_bytes = record_bytes(key.id, slot->record);
  if (new_bytes >= old_bytes) {
    shard.bytes.fetch_add(new_bytes - old_bytes);
  } else {
    shard.bytes.fetch_sub(old_bytes - new_bytes);
  }
  shard.next_ltime();
}

std::vector<std::optional<FeatureRecord>> KnowledgeBank::lookup_features(
    std::span<const KnowledgeKey> keys) const {
  std::vector<std::optional<FeatureRecord>> out;
  out.reserve(keys.size());
  for (const KnowledgeKey& key : keys) {
    const Store& store = store_for(key, NamespaceKind::kFeatures);
    FeatureSlot* slot = nullptr;
    {
      std::shared_lock lock(store.mu);
      auto it = store.features.find(key.id);
      if (it != store.features.end()) slot = it->second.get();
    }
    if (slot == nullptr) {
      out.emplace_back();
      continue;
    }
    std::lock_guard lock(slot->mu);
    out.emplace_back(slot->record);
  }
  return out;
}

std::vector<KnnHit> KnowledgeBank::knn_search(std::string_view ns, std::span<const float> query,
                                              uint32_t k, Metric metric) {
  const NamespaceConfig& cfg = namespace_config(ns);
  if (cfg.kind != NamespaceKind::kEmbeddings) {
    throw_error(ErrorCode::kInvalidArgument, "kNN over a features namespace");
  }
  if (k == 0) throw_error(ErrorCode::kInvalidArgument, "k must be >= 1");
  check_same_dim(query.size(), cfg.dim, "knn query");
  check_finite(query, "knn query");

  std::vector<KnnHit> merged;
  for (auto& shard : shards_) {
    Store& store = shard->stores.find(ns)->second;
    std::vector<KnnHit> local;
    for (auto& [id, slot] : store.embedding_slots()) {
      std::lock_guard lock(slot->mu);
      if (options_.flush_on_scan) flush_locked(*shard, store, *slot);
      const double score = metric == Metric::kCosine ? cosine(query, slot->entry.vector)
                                                     : -l2sq(query, slot->entry.vector);
      local.push_back(KnnHit{KnowledgeKey{std::string(ns), id}, score});
    }
    const size_t keep = std::min<size_t>(k, local.size());
    std::partial_sort(local.begin(), local.begin() + keep, local.end(), hit_before);
    local.resize(keep);
    merged.insert(merged.end(), std::make_move_iterator(local.begin()),
                  std::make_move_iterator(local.end()));
  }
  std::sort(merged.begin(), merged.end(), hit_before);
  if (merged.size() > k) merged.resize(k);
  return merged;
}

std::vector<ShardStats> KnowledgeBank::stats() const {
  std::vector<ShardStats> out;
  out.reserve(shards_.size());
  for (const auto& shard : shards_) {
    ShardStats s;
    s.entries = shard->entries.load();
    s.pending_keys = shard->pending_keys.load();
    s.clock = shard->clock.load();
    s.bytes = shard->bytes.load();
    out.push_back(s);
  }
  return out;
}

size_t KnowledgeBank::pending_count(const KnowledgeKey& key) const {
  const Store& store = store_for(key, NamespaceKind::kEmbeddings);
  Slot* slot = nullptr;
  {
    std::shared_lock lock(store.mu);
    auto it = store.embeddings.find(key.id);
    if (it == store.embeddings.end()) return 0;
    slot = it->second.get();
  }
  std::lock_guard lock(slot->mu);
  return slot->pending.size();
}

BankContents KnowledgeBank::contents() const {
  BankContents out;
  for (const auto& shard : shards_) {
    for (const auto& [name, store] : shard->stores) {
      for (const auto& [id, slot] : store.embedding_slots()) {
        std::lock_guard lock(slot->mu);
        out.embeddings[KnowledgeKey{name, id}] = {slot->entry.vector, slot->entry.version};
      }
      std::shared_lock lock(store.mu);
      for (const auto& [id, slot] : store.features) {
        std::lock_guard slot_lock(slot->mu);
        out.features[KnowledgeKey{name, id}] = slot->record;
      }
    }
  }
  return out;
}

namespace {

void write_config(ByteWriter& w, const NamespaceConfig& cfg) {
  w.put_str16(cfg.name);
  w.put_u8(static_cast<uint8_t>(cfg.kind));
  w.put_u32(cfg.dim);
  w.put_u8(static_cast<uint8_t>(cfg.init));
  w.put_f32(cfg.init_scale);
  w.put_u64(cfg.init_seed);
  w.put_u64(cfg.flush_expiry_ticks);
  w.put_u64(cfg.flush_expiry_ms);
  w.put_f64(cfg.outlier_factor);
}

NamespaceConfig read_config(ByteReader& r) {
  NamespaceConfig cfg;
  cfg.name = r.get_str16();
  const uint8_t kind = r.get_u8();
  if (kind > 1) throw_error(ErrorCode::kMalformedPayload, "bad namespace kind");
  cfg.kind = static_cast<NamespaceKind>(kind);
  cfg.dim = r.get_u32();
  const uint8_t init = r.get_u8();
  if (init > 1) throw_error(ErrorCode::kMalformedPayload, "bad init kind");
  cfg.init = static_cast<InitKind>(init);
  cfg.init_scale = r.get_f32();
  cfg.init_seed = r.get_u64();
  cfg.flush_expiry_ticks = r.get_u64();
  cfg.flush_expiry_ms = r.get_u64();
  cfg.outlier_factor = r.get_f64();
  return cfg;
}

std::filesystem::path shard_file(const std::filesystem::path& dir, uint32_t index) {
  return dir / ("shard-" + std::to_string(index) + ".ckb");
}

}  // namespace

void KnowledgeBank::save_snapshot(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& shard : shards_) {
    ByteWriter w;
    w.put_bytes(kSnapshotMagic);
    w.put_u32(shard->index);
    w.put_u32(options_.num_shards);
    w.put_u64(shard->clock.load());
    w.put_u32(static_cast<uint32_t>(configs_.size()));
    for (const auto& [name, cfg] : configs_) write_config(w, cfg);
    for (const auto& [name, store] : shard->stores) {
      auto slots = store.embedding_slots();
      std::sort(slots.begin(), slots.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      w.put_u32(static_cast<uint32_t>(slots.size()));
      for (const auto& [id, slot] : slots) {
        std::lock_guard lock(slot->mu);
        w.put_str16(id);
        write_entry(w, slot->entry);
        w.put_u32(static_cast<uint32_t>(slot->pending.size()));
        for (const GradientDelta& d : slot->pending) {
          write_vector(w, d.delta);
          w.put_str16(d.source);
          w.put_u64(d.ltime);
        }
      }
      std::shared_lock lock(store.mu);
      std::vector<std::pair<std::string, FeatureSlot*>> feats;
      for (const auto& [id, slot] : store.features) feats.emplace_back(id, slot.get());
      std::sort(feats.begin(), feats.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      w.put_u32(static_cast<uint32_t>(feats.size()));
      for (const auto& [id, slot] : feats) {
        std::lock_guard slot_lock(slot->mu);
        w.put_str16(id);
        write_record(w, slot->record);
      }
    }
    const std::filesystem::path final_path = shard_file(dir, shard->index);
    const std::filesystem::path tmp_path = final_path.string() + ".tmp";
    {
      std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
      out.write(w.bytes().data(), static_cast<std::streamsize>(w.size()));
      if (!out) throw_error(ErrorCode::kIoError, "failed writing " + tmp_path.string());
    }
    std::filesystem::rename(tmp_path, final_path);
  }
}

std::unique_ptr<KnowledgeBank> KnowledgeBank::load_snapshot(const std::filesystem::path& dir,
                                                            BankOptions options) {
  std::vector<std::string> blobs;
  for (uint32_t i = 0;; ++i) {
    const std::filesystem::path p = shard_file(dir, i);
    if (!std::filesystem::exists(p)) break;
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    blobs.push_back(ss.str());
  }
  if (blobs.empty()) throw_error(ErrorCode::kIoError, "no snapshot in " + dir.string());

  std::unique_ptr<KnowledgeBank> bank;
  for (const std::string& blob : blobs) {
    ByteReader r(blob);
    if (r.remaining() < 4 || r.get_bytes(4) != kSnapshotMagic) {
      throw_error(ErrorCode::kMalformedPayload, "bad snapshot magic");
    }
    const uint32_t index = r.get_u32();
    const uint32_t num_shards = r.get_u32();
    const uint64_t clock = r.get_u64();
    if (num_shards != blobs.size() || index >= num_shards) {
      throw_error(ErrorCode::kMalformedPayload, "snapshot shard set is incomplete");
    }
    std::vector<NamespaceConfig> configs(r.get_u32());
    for (NamespaceConfig& cfg : configs) cfg = read_config(r);
    if (!bank) {
      options.num_shards = num_shards;
      bank = std::make_unique<KnowledgeBank>(configs, options);
    }
    Shard& shard = *bank->shards_[index];
    for (auto& [name, store] : shard.stores) {
      const uint32_t n_emb = r.get_u32();
      for (uint32_t i = 0; i < n_emb; ++i) {
        std::string id = r.get_str16();
        auto slot = std::make_unique<Slot>();
        slot->entry = read_entry(r);
        const uint32_t n_pending = r.get_u32();
        for (uint32_t j = 0; j < n_pending; ++j) {
          GradientDelta d;
          d.delta = read_vector(r);
          d.source = r.get_str16();
          d.ltime = r.get_u64();
          slot->pending.push_back(std::move(d));
        }
        if (!slot->pending.empty()) shard.pending_keys.fetch_add(1);
        shard.entries.fetch_add(1);
        shard.bytes.fetch_add(entry_bytes(id, slot->entry));
        store.embeddings.emplace(std::move(id), std::move(slot));
      }
      const uint32_t n_feat = r.get_u32();
      for (uint32_t i = 0; i < n_feat; ++i) {
        std::string id = r.get_str16();
        auto slot = std::make_unique<FeatureSlot>();
        slot->record = read_record(r);
        shard.entries.fetch_add(1);
        shard.bytes.fetch_add(record_bytes(id, slot->record));
        store.features.emplace(std::move(id), std::move(slot));
      }
    }
    r.expect_end("snapshot shard");
    shard.clock.store(clock);
  }
  return bank;
}

}  // namespace knowbank
