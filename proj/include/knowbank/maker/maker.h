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
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "knowbank/bank/knowledge_bank.h"
#include "knowbank/core/types.h"
#include "knowbank/maker/items.h"
#include "knowbank/rpc/client.h"

namespace knowbank::maker {

enum class Task : uint8_t { kEmbedRefresh, kLabelMine, kGraphAgree, kGraphBuild };

const char* task_name(Task t);
Task parse_task(std::string_view name);

struct TaskOptions {
  std::string param = "encoder/W";  // encoder weights used for embeddings
  std::string features_ns = "features";
  std::string embedding_ns = "node_emb";
  std::string labeled_ns = "labeled_emb";  // graph_agree search space
  double tau = 0.9;
  uint32_t k = 5;
  double sigma_min = 0.0;
  Metric metric = Metric::kCosine;
};

struct MakerConfig {
  std::filesystem::path checkpoint_dir;
  std::chrono::milliseconds poll_interval{200};
  Task task = Task::kEmbedRefresh;
  uint32_t batch_size = 64;
  TaskOptions options;
  // Only items with shard_of(key, partitions) == partition are handled.
  uint32_t partition = 0;
  uint32_t partitions = 1;
  std::chrono::milliseconds initial_backoff{50};
  std::chrono::milliseconds max_backoff{30000};
};

void validate_config(const MakerConfig& config);

struct MakerState {
  uint64_t loaded_step = 0;
  bool loaded = false;
  uint64_t items_processed = 0;
  std::optional<std::string> last_error;
};

// Tracks the newest complete checkpoint in a directory.
class CheckpointPoller {
 public:
  explicit CheckpointPoller(std::filesystem::path dir) : dir_(std::move(dir)) {}

  // Loads the newest complete checkpoint with a step above the current one.
  // Returns true when a new checkpoint was adopted. Corrupt files are skipped
  // with a warning; lower steps are ignored. Throws kIoError if the directory
  // is gone.
  bool poll();
  const std::optional<Checkpoint>& current() const { return current_; }

 private:
  std::filesystem::path dir_;
  std::optional<Checkpoint> current_;
  std::set<std::filesystem::path> bad_;
};

// Returns the step encoded in "ckpt-<step>.ckb", or none for other names.
std::optional<uint64_t> checkpoint_step(const std::filesystem::path& file);
std::optional<Checkpoint> latest_checkpoint(const std::filesystem::path& dir);

// Model posterior for raw features under the checkpoint's classifier.
std::vector<double> posterior(const Checkpoint& ckpt, std::span<const float> x,
                              const std::string& param = "encoder/W");

// Each task returns the number of records it wrote.
size_t embed_refresh(const Checkpoint& ckpt, std::span<const Item> items,
                     rpc::BankClient& client, const TaskOptions& opt);
size_t label_mine(const Checkpoint& ckpt, std::span<const Item> items, rpc::BankClient& client,
                  const TaskOptions& opt);
size_t graph_agree(const Checkpoint& ckpt, std::span<const Item> items, rpc::BankClient& client,
                   const TaskOptions& opt);
size_t graph_build(std::span<const Item> items, rpc::BankClient& client, const TaskOptions& opt);

size_t run_task(Task task, const Checkpoint& ckpt, std::span<const Item> items,
                rpc::BankClient& client, const TaskOptions& opt);

// Polls checkpoints and walks the item stream in batches. A pass over the
// stream is repeated only after a newer checkpoint appears.
class Maker {
 public:
  enum class Status { kIdle, kProcessed, kRetry };

  Maker(MakerConfig config, std::vector<Item> items, rpc::BankClient& client);

  // Polls once, then handles at most one batch.
  Status step();
  // Loops until stop is set. max_batches of 0 means no limit.
  void run(const std::atomic<bool>& stop, uint64_t max_batches = 0);

  const MakerState& state() const { return state_; }
  size_t cursor() const { return cursor_; }
  // True once every item has been handled with the loaded checkpoint.
  bool pass_complete() const { return pass_done_; }
  size_t size() const { return items_.size(); }
  std::chrono::milliseconds backoff() const { return backoff_; }
  // Used after kConnectionLost; returns a fresh client.
  void set_reconnect(std::function<rpc::BankClient()> fn) { reconnect_ = std::move(fn); }

 private:
  MakerConfig config_;
  std::vector<Item> items_;
  rpc::BankClient* client_;
  std::optional<rpc::BankClient> owned_;
  std::function<rpc::BankClient()> reconnect_;
  CheckpointPoller poller_;
  MakerState state_;
  size_t cursor_ = 0;
  std::optional<uint64_t> pass_step_;
  bool pass_done_ = false;
  std::chrono::milliseconds backoff_{0};
};

}  // namespace knowbank::maker
