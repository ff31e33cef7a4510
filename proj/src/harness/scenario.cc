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
#include "knowbank/harness/scenario.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>

#include "knowbank/core/error.h"
#include "knowbank/core/hash.h"
#include "knowbank/harness/simulation.h"
#include "knowbank/maker/maker.h"
#include "knowbank/rpc/client.h"
#include "knowbank/trainer/model.h"

namespace knowbank::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr ScenarioName kAllScenarios[] = {
    ScenarioName::kSslGraphReg, ScenarioName::kEncoderGnn, ScenarioName::kCurriculumLabelMine,
    ScenarioName::kGraphAgreement, ScenarioName::kTwoTower};

}  // namespace

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DatasetParams, n, dims, dims_b, latent_dim, classes,
                                                noise, separation, p_in, p_out, labeled_fraction,
                                                test_n)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SystemParams, num_shards, flush_expiry, makers,
                                                maker_poll_ms, staleness, maker_batch)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainingParams, steps, lr, batch_size, hidden,
                                                lambda, temperature, fresh_fraction, num_negatives,
                                                tau, rounds, k, push_grads, init_scale)

const char* scenario_name(ScenarioName s) {
  switch (s) {
    case ScenarioName::kSslGraphReg:
      return "ssl_graph_reg";
    case ScenarioName::kEncoderGnn:
      return "encoder_gnn";
    case ScenarioName::kCurriculumLabelMine:
      return "curriculum_label_mine";
    case ScenarioName::kGraphAgreement:
      return "graph_agreement";
    case ScenarioName::kTwoTower:
      return "two_tower";
  }
  return "?";
}

ScenarioName parse_scenario_name(std::string_view name) {
  for (ScenarioName s : kAllScenarios) {
    if (name == scenario_name(s)) return s;
  }
  throw_error(ErrorCode::kConfigError, "unknown scenario '" + std::string(name) + "'");
}

void to_json(json& j, const Scenario& s) {
  j = json{{"name", scenario_name(s.name)},
           {"seed", s.seed},
           {"dataset", s.dataset},
           {"system", s.system},
           {"training", s.training}};
}

namespace {

// Rejects keys the schema does not know, so typos do not pass silently.
void check_keys(const json& given, const json& known, const std::string& where) {
  if (!given.is_object()) throw_error(ErrorCode::kConfigError, where + " must be an object");
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (!known.contains(it.key())) {
      throw_error(ErrorCode::kConfigError, "unknown field '" + where + it.key() + "'");
    }
    if (it->is_object()) check_keys(*it, known.at(it.key()), where + it.key() + ".");
  }
}

}  // namespace

void from_json(const json& j, Scenario& s) {
  if (!j.is_object() || !j.contains("name")) {
    throw_error(ErrorCode::kConfigError, "scenario needs a name");
  }
  const Scenario base = default_scenario(parse_scenario_name(j.at("name").get<std::string>()));
  json merged = base;
  check_keys(j, merged, "");
  merged.merge_patch(j);
  try {
    s.name = base.name;
    s.seed = merged.at("seed").get<uint64_t>();
    s.dataset = merged.at("dataset").get<DatasetParams>();
    s.system = merged.at("system").get<SystemParams>();
    s.training = merged.at("training").get<TrainingParams>();
  } catch (const json::exception& e) {
    throw_error(ErrorCode::kConfigError, std::string("scenario: ") + e.what());
  }
}

Scenario default_scenario(ScenarioName name) {
  Scenario s;
  s.name = name;
  auto& d = s.dataset;
  auto& t = s.training;
  switch (name) {
    case ScenarioName::kSslGraphReg:
      break;
    case ScenarioName::kEncoderGnn:
      t.lambda = 0.0;
      t.steps = 300;
      break;
    case ScenarioName::kCurriculumLabelMine:
      d = {1000, 40, 0, 0, 4, 0.3, 6.0, 0.0, 0.0, 1.0, 2000};
      t.steps = 300;
      t.lr = 1.0;
      t.batch_size = 64;
      t.hidden = 64;
      t.lambda = 0.0;
      t.rounds = 3;
      break;
    case ScenarioName::kGraphAgreement:
      d = {1000, 40, 0, 0, 4, 0.0, 4.0, 0.0, 0.0, 0.05, 1000};
      t.steps = 600;
      t.batch_size = 64;
      t.hidden = 16;
      t.lambda = 0.0;
      t.rounds = 3;
      break;
    case ScenarioName::kTwoTower:
      d = {2000, 24, 24, 8, 0, 0.3, 0.0, 0.0, 0.0, 0.0, 200};
      t.steps = 300;
      t.lr = 0.05;
      t.batch_size = 32;
      t.hidden = 16;
      t.lambda = 0.0;
      t.temperature = 0.1;
      t.fresh_fraction = 0.5;
      t.num_negatives = 320;
      break;
  }
  return s;
}

void validate_scenario(const Scenario& s) {
  auto fail = [](const std::string& m) { throw_error(ErrorCode::kConfigError, m); };
  if (s.dataset.n == 0) fail("dataset.n must be positive");
  if (s.system.num_shards == 0) fail("system.num_shards must be positive");
  if (s.system.makers == 0) fail("system.makers must be positive");
  if (s.system.maker_batch == 0) fail("system.maker_batch must be positive");
  if (s.system.maker_poll_ms == 0) fail("system.maker_poll_ms must be positive");
  if (s.training.steps == 0) fail("training.steps must be positive");
  if (!(s.training.tau > 0.0 && s.training.tau < 1.0)) fail("training.tau must lie in (0, 1)");
  if (s.training.k == 0) fail("training.k must be positive");
  if (s.name == ScenarioName::kTwoTower && s.training.batch_size == 0) {
    fail("two_tower needs a batch size");
  }
}

Scenario load_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorCode::kIoError, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw_error(ErrorCode::kConfigError, path.string() + ": " + e.what());
  }
  Scenario s = j.get<Scenario>();
  validate_scenario(s);
  return s;
}

void save_scenario(const Scenario& s, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw_error(ErrorCode::kIoError, "cannot write " + path.string());
  out << json(s).dump(2) << '\n';
}

SyntheticDataset make_dataset(const Scenario& s) {
  const auto& d = s.dataset;
  switch (s.name) {
    case ScenarioName::kSslGraphReg:
    case ScenarioName::kEncoderGnn:
      return gen_sbm({d.n, d.classes, d.p_in, d.p_out, d.dims, d.separation, d.labeled_fraction,
                      s.seed});
    case ScenarioName::kCurriculumLabelMine:
    case ScenarioName::kGraphAgreement:
      return gen_blobs({d.n, d.dims, d.classes, d.separation, d.noise, d.labeled_fraction,
                        d.test_n, s.seed});
    case ScenarioName::kTwoTower:
      return gen_pairs({d.n, d.test_n, d.latent_dim, d.dims, d.dims_b, d.noise, s.seed});
  }
  throw_error(ErrorCode::kConfigError, "unknown scenario");
}

double node_accuracy(const trainer::ModelSpec& spec, const std::map<std::string, Matrix>& params,
                     const SyntheticDataset& ds, const std::vector<size_t>& eval) {
  if (eval.empty()) return 0.0;
  const auto p = trainer::to_double(params);
  const auto& w = trainer::param(p, trainer::kEncoderW);
  const auto& v = trainer::param(p, trainer::kClassifierV);
  std::vector<std::vector<double>> h(ds.items.size());
  auto hidden = [&](size_t i) -> const std::vector<double>& {
    if (h[i].empty()) h[i] = trainer::encode(w, ds.items[i].x);
    return h[i];
  };
  std::vector<std::vector<size_t>> adj;
  if (spec.variant == trainer::Variant::kEncoderGnn) {
    adj.resize(ds.items.size());
    for (const auto& e : ds.edges) {
      adj[e.a].push_back(e.b);
      adj[e.b].push_back(e.a);
    }
  }
  size_t correct = 0;
  for (size_t i : eval) {
    std::vector<double> z = hidden(i);
    if (spec.variant == trainer::Variant::kEncoderGnn) {
      for (size_t j : adj[i]) {
        const auto& hj = hidden(j);
        for (size_t k = 0; k < z.size(); ++k) z[k] += hj[k];
      }
      for (double& x : z) x /= static_cast<double>(adj[i].size() + 1);
      z = trainer::encode(trainer::param(p, trainer::kGnnU), std::span<const double>(z));
    }
    const auto probs = trainer::classify(v, z);
    const size_t pred = static_cast<size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (pred == ds.items[i].truth) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(eval.size());
}

double recall_at_1(const std::map<std::string, Matrix>& params, const SyntheticDataset& ds) {
  const auto p = trainer::to_double(params);
  std::vector<std::vector<double>> a, b;
  for (const auto& it : ds.items) {
    if (it.split != Split::kTest) continue;
    a.push_back(trainer::encode(trainer::param(p, trainer::kTowerA), it.x));
    b.push_back(trainer::encode(trainer::param(p, trainer::kTowerB), it.y));
  }
  if (a.empty()) return 0.0;
  auto cos = [](const std::vector<double>& x, const std::vector<double>& y) {
    double d = 0, nx = 0, ny = 0;
    for (size_t k = 0; k < x.size(); ++k) {
      d += x[k] * y[k];
      nx += x[k] * x[k];
      ny += y[k] * y[k];
    }
    return nx > 0 && ny > 0 ? d / std::sqrt(nx * ny) : 0.0;
  };
  size_t hits = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    size_t best = 0;
    double best_s = -2.0;
    for (size_t j = 0; j < b.size(); ++j) {
      const double s = cos(a[i], b[j]);
      if (s > best_s) {
        best_s = s;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

double bank_label_accuracy(const BankContents& bank, const SyntheticDataset& ds,
                           const std::string& features_ns) {
  size_t total = 0, correct = 0;
  for (const auto& it : ds.items) {
    if (it.split != Split::kTrain) continue;
    auto f = bank.features.find({features_ns, it.id});
    if (f == bank.features.end() || !f->second.label_dist) continue;
    const auto& ld = *f->second.label_dist;
    ++total;
    if (static_cast<uint32_t>(std::max_element(ld.begin(), ld.end()) - ld.begin()) == it.truth) {
      ++correct;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

RunResult run_deterministic(const Scenario& s) {
  validate_scenario(s);
  Simulation sim(s);
  KnowledgeBank bank(sim.namespaces(), {s.system.num_shards, true});
  rpc::BankClient client(std::make_unique<rpc::LoopbackChannel>(bank));
  sim.seed_bank(client);
  trainer::Trainer tr(sim.trainer_config(), sim.trainer_data(), &client);

  std::deque<Checkpoint> history;
  history.push_back(tr.checkpoint());
  RunResult r;
  for (uint64_t t = 0; t < s.training.steps; ++t) {
    // history.front() holds the parameters of step max(0, t - staleness).
    sim.run_makers(t, history.front(), client);
    r.metrics.push_back(tr.step());
    r.regularizer.push_back(tr.last_regularizer());
    bank.tick_expiry();
    history.push_back(tr.checkpoint());
    while (history.size() > s.system.staleness + 1) history.pop_front();
  }
  r.bank = bank.contents();
  r.summary = sim.summarize(tr.params(), r.metrics, r.regularizer, r.bank);
  r.summary["mode"] = "deterministic";
  return r;
}

void write_outputs(const RunResult& r, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  trainer::write_metrics(out_dir / "metrics.csv", r.metrics);
  std::ofstream out(out_dir / "summary.json", std::ios::trunc);
  out << r.summary.dump(2) << '\n';
  if (!out) throw_error(ErrorCode::kIoError, "cannot write summary in " + out_dir.string());
}

json CompareReport::to_json() const {
  json j{{"rows", rows},
         {"final_accuracy_delta", final_accuracy_delta},
         {"max_loss_divergence", max_loss_divergence},
         {"max_accuracy_divergence", max_accuracy_divergence},
         {"pass", pass}};
  if (test_accuracy_delta) j["test_accuracy_delta"] = *test_accuracy_delta;
  return j;
}

CompareReport compare_runs(const std::vector<trainer::MetricsRow>& a,
                           const std::vector<trainer::MetricsRow>& b, CompareTolerance tol) {
  if (a.size() != b.size()) {
    throw_error(ErrorCode::kSchemaMismatch, "traces differ in length: " + std::to_string(a.size()) +
                                                " vs " + std::to_string(b.size()));
  }
  CompareReport rep;
  rep.rows = a.size();
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].step != b[i].step) {
      throw_error(ErrorCode::kSchemaMismatch, "step columns differ at row " + std::to_string(i));
    }
    rep.max_loss_divergence = std::max(rep.max_loss_divergence, std::abs(a[i].loss - b[i].loss));
    rep.max_accuracy_divergence =
        std::max(rep.max_accuracy_divergence, std::abs(a[i].accuracy - b[i].accuracy));
  }
  if (!a.empty()) rep.final_accuracy_delta = b.back().accuracy - a.back().accuracy;
  rep.pass = rep.max_loss_divergence <= tol.loss && std::abs(rep.final_accuracy_delta) <= tol.accuracy;
  return rep;
}

CompareReport compare_runs(const fs::path& a, const fs::path& b, CompareTolerance tol) {
  auto metrics_of = [](const fs::path& p) {
    return fs::is_directory(p) ? p / "metrics.csv" : p;
  };
  auto summary_of = [](const fs::path& p) -> std::optional<json> {
    const fs::path f = fs::is_directory(p) ? p / "summary.json" : p.parent_path() / "summary.json";
    std::ifstream in(f);
    if (!in) return std::nullopt;
    return json::parse(in, nullptr, false);
  };
  CompareReport rep = compare_runs(trainer::read_metrics(metrics_of(a)),
                                   trainer::read_metrics(metrics_of(b)), tol);
  const auto sa = summary_of(a), sb = summary_of(b);
  if (sa && sb && sa->contains("final_test_accuracy") && sb->contains("final_test_accuracy")) {
    rep.test_accuracy_delta =
        sb->at("final_test_accuracy").get<double>() - sa->at("final_test_accuracy").get<double>();
    rep.pass = rep.pass && std::abs(*rep.test_accuracy_delta) <= tol.accuracy;
  }
  return rep;
}

}  // namespace knowbank::harness
