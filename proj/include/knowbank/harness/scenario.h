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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "knowbank/bank/knowledge_bank.h"
#include "knowbank/harness/datasets.h"
#include "knowbank/trainer/trainer.h"

namespace knowbank::harness {

enum class ScenarioName : uint8_t {
  kSslGraphReg,
  kEncoderGnn,
  kCurriculumLabelMine,
  kGraphAgreement,
  kTwoTower,
};

const char* scenario_name(ScenarioName s);
ScenarioName parse_scenario_name(std::string_view name);

struct DatasetParams {
  uint32_t n = 200;
  uint32_t dims = 50;
  uint32_t dims_b = 24;
  uint32_t latent_dim = 8;
  uint32_t classes = 2;
  double noise = 0.0;
  double separation = 1.0;
  double p_in = 0.2;
  double p_out = 0.01;
  double labeled_fraction = 0.1;
  uint32_t test_n = 0;
};

struct SystemParams {
  uint32_t num_shards = 1;
  uint64_t flush_expiry = 0;
  uint32_t makers = 1;
  uint32_t maker_poll_ms = 20;
  uint64_t staleness = 0;  // maker reads the parameters of step t - staleness
  uint32_t maker_batch = 256;
};

struct TrainingParams {
  uint64_t steps = 800;
  double lr = 0.3;
  uint32_t batch_size = 0;
  uint32_t hidden = 8;
  double lambda = 10.0;
  double temperature = 0.1;
  double fresh_fraction = 0.5;
  uint32_t num_negatives = 0;
  double tau = 0.9;
  uint32_t rounds = 3;  // mining or agreement rounds
  uint32_t k = 5;
  bool push_grads = false;
  double init_scale = 0.3;
};

struct Scenario {
  ScenarioName name = ScenarioName::kSslGraphReg;
  uint64_t seed = 1;
  DatasetParams dataset;
  SystemParams system;
  TrainingParams training;
};

void to_json(nlohmann::json& j, const Scenario& s);
void from_json(const nlohmann::json& j, Scenario& s);

// Defaults tuned per scenario; a config file only needs to override fields.
Scenario default_scenario(ScenarioName name);
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);
void validate_scenario(const Scenario& s);

SyntheticDataset make_dataset(const Scenario& s);

struct RunResult {
  std::vector<trainer::MetricsRow> metrics;
  nlohmann::json summary;
  std::vector<double> regularizer;  // per step, node scenarios
  BankContents bank;
};

// Bank, makers and trainer on one thread. Each step: makers refresh from the
// parameters of step t - staleness, the trainer steps, every shard ticks.
RunResult run_deterministic(const Scenario& s);

// Spawns "bank serve", "maker run" and "trainer run" processes of the given
// binary and collects their outputs under out_dir.
RunResult run_networked(const Scenario& s, const std::filesystem::path& binary,
                        const std::filesystem::path& out_dir);

void write_outputs(const RunResult& r, const std::filesystem::path& out_dir);

// Evaluation helpers (ground truth stays outside the bank).
double node_accuracy(const trainer::ModelSpec& spec, const std::map<std::string, Matrix>& params,
                     const SyntheticDataset& ds, const std::vector<size_t>& eval);
double recall_at_1(const std::map<std::string, Matrix>& params, const SyntheticDataset& ds);
double bank_label_accuracy(const BankContents& bank, const SyntheticDataset& ds,
                           const std::string& features_ns = "features");

struct CompareReport {
  size_t rows = 0;
  double final_accuracy_delta = 0.0;
  double max_loss_divergence = 0.0;
  double max_accuracy_divergence = 0.0;
  std::optional<double> test_accuracy_delta;
  bool pass = false;

  nlohmann::json to_json() const;
};

struct CompareTolerance {
  double loss = 1e-5;
  double accuracy = 1e-3;
};

// Throws kSchemaMismatch when the traces do not share a schema and step set.
CompareReport compare_runs(const std::vector<trainer::MetricsRow>& a,
                           const std::vector<trainer::MetricsRow>& b, CompareTolerance tol = {});
// Accepts metrics CSV files or run directories (metrics.csv + summary.json).
CompareReport compare_runs(const std::filesystem::path& a, const std::filesystem::path& b,
                           CompareTolerance tol = {});

}  // namespace knowbank::harness
