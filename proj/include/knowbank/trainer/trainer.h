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
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "knowbank/core/types.h"
#include "knowbank/rpc/client.h"
#include "knowbank/trainer/model.h"

namespace knowbank::trainer {

// Namespaces the trainer reads and writes.
struct BankLayout {
  std::string features_ns = "features";
  std::string embedding_ns = "node_emb";
  std::string tower_a_ns = "emb_a";
  std::string tower_b_ns = "emb_b";
};

struct TrainerData {
  std::vector<std::string> ids;
  std::vector<Vector> x;
  std::vector<Vector> y;  // second modality, two_tower only
  // Observed labels kept locally; used when the bank cannot be reached.
  std::vector<std::optional<uint32_t>> labels;
  std::vector<size_t> train;  // indices eligible for batches
};

struct TrainerConfig {
  ModelSpec spec;
  double lr = 0.1;
  uint64_t steps = 100;
  uint64_t seed = 1;
  uint32_t batch_size = 0;  // 0 means the whole training set every step
  uint32_t num_negatives = 0;
  std::string ckpt_dir;
  uint64_t ckpt_every = 0;
  bool push_own_grads = true;
  bool push_neighbor_grads = false;
  std::string source = "trainer-0";
  BankLayout layout;
};

struct MetricsRow {
  uint64_t step = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  uint64_t stale_skips = 0;
  double mean_neighbor_version_lag = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

inline constexpr const char* kMetricsHeader =
    "step,loss,accuracy,stale_skips,mean_neighbor_version_lag";
std::string format_metrics_row(const MetricsRow& row);
MetricsRow parse_metrics_row(const std::string& line);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);
void write_metrics(const std::filesystem::path& path, std::span<const MetricsRow> rows);

// "ckpt-<step>.tmp" is written in full, then renamed to "ckpt-<step>.ckb".
std::filesystem::path write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);

// Single-threaded SGD loop. Knowledge (labels, neighbor lists, fetched
// embeddings, cached negatives) comes from the bank; fetched embeddings are
// constants in the backward pass.
class Trainer {
 public:
  // client may be null for bank-free runs.
  Trainer(TrainerConfig config, TrainerData data, rpc::BankClient* client);

  MetricsRow step();
  MetricsRow step(std::span<const size_t> batch);
  // Runs the remaining steps, writing checkpoints and streaming metrics.
  std::vector<MetricsRow> run(std::ostream* metrics_out = nullptr);

  uint64_t global_step() const { return step_; }
  const std::map<std::string, Matrix>& params() const { return params_; }
  void set_params(std::map<std::string, Matrix> params) { params_ = std::move(params); }
  Checkpoint checkpoint() const;
  std::filesystem::path save_checkpoint();

  uint64_t stale_skips() const { return stale_skips_; }
  // Graph regularizer of the last node step.
  double last_regularizer() const { return last_regularizer_; }
  // Gradients pushed to the bank in the last step, keyed by embedding id.
  const std::map<KnowledgeKey, Vector>& last_pushed() const { return last_pushed_; }
  const TrainerConfig& config() const { return config_; }
  const TrainerData& data() const { return data_; }

  std::vector<size_t> sample_batch();

 private:
  MetricsRow step_nodes(std::span<const size_t> batch);
  MetricsRow step_pairs(std::span<const size_t> batch);
  void push_gradients(const std::map<KnowledgeKey, Vector>& grads);
  std::optional<uint32_t> local_label(size_t index) const;
  Vector one_hot(uint32_t label) const;

  TrainerConfig config_;
  TrainerData data_;
  rpc::BankClient* client_;
  std::map<std::string, Matrix> params_;
  std::mt19937_64 rng_;
  uint64_t step_ = 0;
  uint64_t stale_skips_ = 0;
  double last_regularizer_ = 0.0;
  std::map<KnowledgeKey, Vector> last_pushed_;
};

}  // namespace knowbank::trainer
