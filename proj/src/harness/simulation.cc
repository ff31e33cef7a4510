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
#include "knowbank/harness/simulation.h"

#include <algorithm>

#include "knowbank/core/error.h"
#include "knowbank/core/hash.h"

namespace knowbank::harness {

using nlohmann::json;

namespace {

constexpr const char* kFeatures = "features";
constexpr const char* kNodeEmb = "node_emb";
constexpr const char* kLabeledEmb = "labeled_emb";
constexpr const char* kEmbA = "emb_a";
constexpr const char* kEmbB = "emb_b";

bool is_node(ScenarioName n) { return n != ScenarioName::kTwoTower; }

double mean_of(const std::vector<double>& v, size_t from, size_t to) {
  if (from >= to) return 0.0;
  double s = 0.0;
  for (size_t i = from; i < to; ++i) s += v[i];
  return s / static_cast<double>(to - from);
}

}  // namespace

Simulation::Simulation(const Scenario& s) : Simulation(s, make_dataset(s)) {}

Simulation::Simulation(const Scenario& s, SyntheticDataset ds) : s_(s), ds_(std::move(ds)) {
  for (size_t i = 0; i < ds_.items.size(); ++i) {
    if (ds_.items[i].split == Split::kTrain) train_.push_back(i);
  }
}

std::vector<NamespaceConfig> Simulation::namespaces() const {
  std::vector<NamespaceConfig> out;
  NamespaceConfig f;
  f.name = kFeatures;
  f.kind = NamespaceKind::kFeatures;
  out.push_back(f);
  auto emb = [&](const char* name) {
    NamespaceConfig e;
    e.name = name;
    e.dim = s_.training.hidden;
    e.flush_expiry_ticks = s_.system.flush_expiry;
    out.push_back(e);
  };
  if (is_node(s_.name)) {
    emb(kNodeEmb);
    if (s_.name == ScenarioName::kGraphAgreement) emb(kLabeledEmb);
  } else {
    emb(kEmbA);
    emb(kEmbB);
  }
  return out;
}

void Simulation::seed_bank(rpc::BankClient& client) const {
  if (!is_node(s_.name)) return;
  std::vector<FeatureRecord> recs(ds_.items.size());
  for (const auto& e : ds_.edges) {
    recs[e.a].neighbors.push_back({{kNodeEmb, ds_.items[e.b].id}, e.weight});
    recs[e.b].neighbors.push_back({{kNodeEmb, ds_.items[e.a].id}, e.weight});
  }
  std::vector<rpc::Request> reqs;
  for (size_t i : train_) {
    FeatureRecord& r = recs[i];
    if (const auto& obs = ds_.items[i].observed) {
      r.label_dist = Vector(ds_.classes, 0.0f);
      (*r.label_dist)[*obs] = 1.0f;
      r.label_source = LabelSource::kObserved;
    }
    reqs.push_back(rpc::SetFeatRequest{{kFeatures, ds_.items[i].id}, std::move(r)});
  }
  for (const auto& resp : client.call_batch(reqs)) {
    if (const auto* err = std::get_if<rpc::ErrorResponse>(&resp)) {
      throw_error(err->code, "seeding bank: " + err->message);
    }
  }
}

uint64_t Simulation::trainer_seed() const {
  uint64_t state = s_.seed ^ 0x7472616e6572ULL;
  return splitmix64(state);
}

trainer::TrainerConfig Simulation::trainer_config() const {
  const auto& t = s_.training;
  trainer::TrainerConfig c;
  c.spec.variant = s_.name == ScenarioName::kTwoTower    ? trainer::Variant::kTwoTower
                   : s_.name == ScenarioName::kEncoderGnn ? trainer::Variant::kEncoderGnn
                                                          : trainer::Variant::kGraphReg;
  c.spec.input_dim = s_.dataset.dims;
  c.spec.input_dim_b = s_.name == ScenarioName::kTwoTower ? s_.dataset.dims_b : 0;
  c.spec.hidden_dim = t.hidden;
  c.spec.num_classes = ds_.classes;
  c.spec.temperature = t.temperature;
  c.spec.lambda = c.spec.variant == trainer::Variant::kGraphReg ? t.lambda : 0.0;
  c.spec.fresh_fraction = t.fresh_fraction;
  c.spec.init_scale = t.init_scale;
  c.lr = t.lr;
  c.steps = t.steps;
  c.seed = trainer_seed();
  c.batch_size = t.batch_size;
  c.num_negatives = t.num_negatives;
  c.push_own_grads = t.push_grads;
  c.layout = {kFeatures, kNodeEmb, kEmbA, kEmbB};
  return c;
}

trainer::TrainerData Simulation::trainer_data() const {
  trainer::TrainerData d;
  for (size_t i : train_) {
    const auto& it = ds_.items[i];
    d.ids.push_back(it.id);
    d.x.push_back(it.x);
    if (!it.y.empty()) d.y.push_back(it.y);
    d.labels.push_back(it.observed);
  }
  return d;
}

std::vector<MakerJob> Simulation::maker_jobs() const {
  std::vector<maker::Item> all, all_b, labeled, unlabeled;
  for (size_t i : train_) {
    const auto& it = ds_.items[i];
    all.push_back({it.id, it.x, it.observed});
    if (!it.y.empty()) all_b.push_back({it.id, it.y, std::nullopt});
    (it.observed ? labeled : unlabeled).push_back({it.id, it.x, it.observed});
  }
  maker::TaskOptions base;
  base.features_ns = kFeatures;
  base.embedding_ns = kNodeEmb;
  base.labeled_ns = kLabeledEmb;
  base.tau = s_.training.tau;
  base.k = s_.training.k;

  std::vector<MakerJob> jobs;
  switch (s_.name) {
    case ScenarioName::kSslGraphReg:
      if (s_.training.lambda > 0.0) jobs.push_back({maker::Task::kEmbedRefresh, all, base, "items"});
      break;
    case ScenarioName::kEncoderGnn:
      jobs.push_back({maker::Task::kEmbedRefresh, all, base, "items"});
      break;
    case ScenarioName::kCurriculumLabelMine:
      if (s_.training.rounds > 0) jobs.push_back({maker::Task::kLabelMine, all, base, "items"});
      break;
    case ScenarioName::kGraphAgreement:
      if (s_.training.rounds > 0) {
        auto opt = base;
        opt.embedding_ns = kLabeledEmb;
        jobs.push_back({maker::Task::kEmbedRefresh, labeled, opt, "labeled"});
        jobs.push_back({maker::Task::kGraphAgree, unlabeled, base, "unlabeled"});
      }
      break;
    case ScenarioName::kTwoTower:
      if (s_.training.fresh_fraction < 1.0 || s_.training.num_negatives > 0) {
        auto a = base, b = base;
        a.param = std::string(trainer::kTowerA);
        a.embedding_ns = kEmbA;
        b.param = std::string(trainer::kTowerB);
        b.embedding_ns = kEmbB;
        jobs.push_back({maker::Task::kEmbedRefresh, all, a, "items"});
        jobs.push_back({maker::Task::kEmbedRefresh, all_b, b, "items_b"});
      }
      break;
  }
  return jobs;
}

bool Simulation::runs_every_step() const {
  return s_.name == ScenarioName::kSslGraphReg || s_.name == ScenarioName::kEncoderGnn ||
         s_.name == ScenarioName::kTwoTower;
}

std::vector<uint64_t> Simulation::round_steps() const {
  std::vector<uint64_t> out;
  if (runs_every_step()) return out;
  const uint64_t r = s_.training.rounds;
  for (uint64_t i = 0; i < r; ++i) out.push_back(s_.training.steps * (i + 1) / (r + 1));
  return out;
}

void Simulation::run_makers(uint64_t t, const Checkpoint& ckpt, rpc::BankClient& client) const {
  if (!runs_every_step()) {
    const auto rounds = round_steps();
    if (std::find(rounds.begin(), rounds.end(), t) == rounds.end()) return;
  }
  const uint32_t makers = s_.system.makers;
  for (const MakerJob& job : maker_jobs()) {
    const std::string& ns = job.task == maker::Task::kEmbedRefresh ? job.options.embedding_ns
                                                                   : job.options.features_ns;
    // Makers own disjoint partitions of the stream and run one after another.
    for (uint32_t m = 0; m < makers; ++m) {
      std::vector<maker::Item> mine;
      for (const auto& it : job.items) {
        if (makers == 1 || shard_of({ns, it.id}, makers) == m) mine.push_back(it);
      }
      for (size_t off = 0; off < mine.size(); off += s_.system.maker_batch) {
        const size_t n = std::min<size_t>(s_.system.maker_batch, mine.size() - off);
        maker::run_task(job.task, ckpt, std::span<const maker::Item>(mine.data() + off, n), client,
                        job.options);
      }
    }
  }
}

std::vector<size_t> Simulation::eval_indices() const {
  std::vector<size_t> test, unlabeled;
  for (size_t i = 0; i < ds_.items.size(); ++i) {
    if (ds_.items[i].split == Split::kTest) test.push_back(i);
    else if (!ds_.items[i].observed) unlabeled.push_back(i);
  }
  return test.empty() ? unlabeled : test;
}

json Simulation::summarize(const std::map<std::string, Matrix>& params,
                           const std::vector<trainer::MetricsRow>& metrics,
                           const std::vector<double>& regularizer,
                           const BankContents& bank) const {
  json j{{"scenario", scenario_name(s_.name)},
         {"seed", s_.seed},
         {"steps", metrics.size()},
         {"staleness", s_.system.staleness}};
  if (!metrics.empty()) {
    j["final_loss"] = metrics.back().loss;
    j["stale_skips"] = metrics.back().stale_skips;
    double lag = 0.0;
    for (const auto& m : metrics) lag += m.mean_neighbor_version_lag;
    j["mean_version_lag"] = lag / static_cast<double>(metrics.size());
  }
  const auto spec = trainer_config().spec;
  if (is_node(s_.name)) {
    j["final_test_accuracy"] = node_accuracy(spec, params, ds_, eval_indices());
  } else {
    j["recall_at_1"] = recall_at_1(params, ds_);
  }
  if (s_.name == ScenarioName::kSslGraphReg && !regularizer.empty()) {
    const size_t w = std::max<size_t>(1, regularizer.size() / 10);
    j["regularizer_first"] = mean_of(regularizer, 0, w);
    j["regularizer_last"] = mean_of(regularizer, regularizer.size() - w, regularizer.size());
  }
  if (s_.name == ScenarioName::kCurriculumLabelMine || s_.name == ScenarioName::kGraphAgreement) {
    size_t labeled = 0, right = 0;
    for (size_t i : train_) {
      if (!ds_.items[i].observed) continue;
      ++labeled;
      if (*ds_.items[i].observed == ds_.items[i].truth) ++right;
    }
    j["label_accuracy_initial"] = labeled ? static_cast<double>(right) / labeled : 0.0;
    j["label_accuracy_final"] = bank_label_accuracy(bank, ds_, kFeatures);
    size_t with_label = 0;
    for (size_t i : train_) {
      auto f = bank.features.find({kFeatures, ds_.items[i].id});
      if (f != bank.features.end() && f->second.label_dist) ++with_label;
    }
    j["label_coverage_final"] = train_.empty() ? 0.0 : static_cast<double>(with_label) / train_.size();
  }
  return j;
}

}  // namespace knowbank::harness
