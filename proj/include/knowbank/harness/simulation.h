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
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "knowbank/bank/knowledge_bank.h"
#include "knowbank/harness/datasets.h"
#include "knowbank/harness/scenario.h"
#include "knowbank/maker/maker.h"
#include "knowbank/rpc/client.h"
#include "knowbank/trainer/trainer.h"

namespace knowbank::harness {

// One maker job: a task over an item list with its options.
struct MakerJob {
  maker::Task task;
  std::vector<maker::Item> items;
  maker::TaskOptions options;
  std::string name;  // also the item file stem in networked mode
};

// Scenario wiring shared by both run modes: dataset, namespaces, initial
// bank content, trainer setup, maker jobs and evaluation.
class Simulation {
 public:
  explicit Simulation(const Scenario& s);
  Simulation(const Scenario& s, SyntheticDataset ds);

  const Scenario& scenario() const { return s_; }
  const SyntheticDataset& dataset() const { return ds_; }

  std::vector<NamespaceConfig> namespaces() const;
  // Observed labels and static graph edges; ground truth never goes in.
  void seed_bank(rpc::BankClient& client) const;

  trainer::TrainerConfig trainer_config() const;
  trainer::TrainerData trainer_data() const;
  uint64_t trainer_seed() const;

  std::vector<MakerJob> maker_jobs() const;
  // Steps before which round-based jobs run; empty for per-step jobs.
  std::vector<uint64_t> round_steps() const;
  bool runs_every_step() const;
  // Scripted maker work before trainer step t.
  void run_makers(uint64_t t, const Checkpoint& ckpt, rpc::BankClient& client) const;

  std::vector<size_t> eval_indices() const;
  nlohmann::json summarize(const std::map<std::string, Matrix>& params,
                           const std::vector<trainer::MetricsRow>& metrics,
                           const std::vector<double>& regularizer, const BankContents& bank) const;

 private:
  Scenario s_;
  SyntheticDataset ds_;
  std::vector<size_t> train_;  // dataset indices of the training split
};

}  // namespace knowbank::harness
