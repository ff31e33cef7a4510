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
#include <signal.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "knowbank/core/error.h"
#include "knowbank/harness/bank_config.h"
#include "knowbank/harness/datasets.h"
#include "knowbank/harness/scenario.h"
#include "knowbank/maker/maker.h"
#include "knowbank/rpc/server.h"
#include "knowbank/trainer/trainer.h"

namespace kb = knowbank;
namespace fs = std::filesystem;
using std::chrono::milliseconds;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

void install_signals() {
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
  signal(SIGPIPE, SIG_IGN);
}

void sleep_unless_stopped(milliseconds d) {
  const auto until = std::chrono::steady_clock::now() + d;
  while (!g_stop.load() && std::chrono::steady_clock::now() < until) {
    std::this_thread::sleep_for(std::min(d, milliseconds(5)));
  }
}

// ---- bank serve ----

struct BankArgs {
  std::string host = "127.0.0.1";
  uint16_t port = 0;
  std::string port_file;
  std::string config;
  size_t workers = 4;
  size_t max_frame = kb::rpc::kDefaultMaxFrame;
  uint32_t tick_ms = 0;
  std::string snapshot_dir;
  std::string load_snapshot;
};

int bank_serve(const BankArgs& a) {
  auto cfg = kb::harness::load_bank_config(a.config);
  std::unique_ptr<kb::KnowledgeBank> bank;
  if (!a.load_snapshot.empty()) {
    bank = kb::KnowledgeBank::load_snapshot(a.load_snapshot, cfg.options);
  } else {
    bank = std::make_unique<kb::KnowledgeBank>(cfg.namespaces, cfg.options);
  }
  kb::rpc::BankServer server(*bank, {a.host, a.port, a.workers, a.max_frame, a.tick_ms});
  server.start();
  spdlog::info("bank serving on {}:{} with {} shards", a.host, server.port(), cfg.options.num_shards);
  if (!a.port_file.empty()) {
    const fs::path tmp = a.port_file + ".tmp";
    std::ofstream(tmp) << server.port() << '\n';
    fs::rename(tmp, a.port_file);
  }
  while (!g_stop.load()) std::this_thread::sleep_for(milliseconds(20));
  server.stop();
  if (!a.snapshot_dir.empty()) {
    bank->save_snapshot(a.snapshot_dir);
    spdlog::info("snapshot written to {}", a.snapshot_dir);
  }
  spdlog::info("bank stopped after {} frames", server.frames_received());
  return 0;
}

// ---- maker run ----

struct MakerArgs {
  std::string task;
  std::string bank;
  std::string checkpoint_dir;
  std::string input;
  uint32_t poll_ms = 200;
  double tau = 0.9;
  uint32_t k = 5;
  double sigma_min = 0.0;
  uint64_t seed = 0;
  uint32_t batch_size = 64;
  std::string param = "encoder/W";
  std::string features_ns = "features";
  std::string embedding_ns = "node_emb";
  std::string labeled_ns = "labeled_emb";
  std::string metric = "cosine";
  std::string partition = "0/1";
  bool once = false;
  uint32_t throttle_ms = 0;
  uint32_t timeout_ms = 5000;
};

kb::rpc::BankClient connect_with_retry(const std::string& endpoint, milliseconds timeout) {
  milliseconds backoff(50);
  while (true) {
    try {
      return kb::rpc::BankClient::connect(endpoint, {timeout});
    } catch (const kb::Error& e) {
      if (g_stop.load()) throw;
      spdlog::warn("bank {} unreachable ({}); retrying in {} ms", endpoint, e.what(), backoff.count());
      sleep_unless_stopped(backoff);
      backoff = std::min(backoff * 2, milliseconds(30000));
    }
  }
}

int maker_run(const MakerArgs& a) {
  kb::maker::MakerConfig cfg;
  cfg.checkpoint_dir = a.checkpoint_dir;
  cfg.poll_interval = milliseconds(a.poll_ms);
  cfg.task = kb::maker::parse_task(a.task);
  cfg.batch_size = a.batch_size;
  cfg.options.param = a.param;
  cfg.options.features_ns = a.features_ns;
  cfg.options.embedding_ns = a.embedding_ns;
  cfg.options.labeled_ns = a.labeled_ns;
  cfg.options.tau = a.tau;
  cfg.options.k = a.k;
  cfg.options.sigma_min = a.sigma_min;
  cfg.options.metric = kb::parse_metric(a.metric);
  const auto slash = a.partition.find('/');
  if (slash == std::string::npos) kb::throw_error(kb::ErrorCode::kConfigError, "--partition is i/n");
  cfg.partition = static_cast<uint32_t>(std::stoul(a.partition.substr(0, slash)));
  cfg.partitions = static_cast<uint32_t>(std::stoul(a.partition.substr(slash + 1)));
  kb::maker::validate_config(cfg);

  auto items = kb::maker::read_items(a.input);
  const milliseconds timeout(a.timeout_ms);
  auto client = connect_with_retry(a.bank, timeout);
  kb::maker::Maker maker(cfg, std::move(items), client);
  maker.set_reconnect([&] { return kb::rpc::BankClient::connect(a.bank, {timeout}); });
  spdlog::info("{} maker over {} items, partition {}", a.task, maker.size(), a.partition);

  while (!g_stop.load()) {
    const auto status = maker.step();
    if (status == kb::maker::Maker::Status::kProcessed) {
      if (a.throttle_ms) sleep_unless_stopped(milliseconds(a.throttle_ms));
      continue;
    }
    if (a.once && maker.state().loaded && maker.pass_complete()) break;
    sleep_unless_stopped(status == kb::maker::Maker::Status::kRetry ? maker.backoff()
                                                                     : cfg.poll_interval);
  }
  spdlog::info("maker done: loaded_step={} items_processed={}", maker.state().loaded_step,
               maker.state().items_processed);
  return 0;
}

// ---- trainer run ----

struct TrainerArgs {
  std::string variant;
  std::string bank;
  std::string ckpt_dir;
  std::string data;
  double lr = 0.1;
  double lambda = 0.0;
  double tau_c = 0.1;
  double rho = 0.5;
  uint64_t steps = 100;
  uint64_t seed = 1;
  uint64_t ckpt_every = 0;
  uint32_t hidden = 16;
  uint32_t batch_size = 0;
  uint32_t negatives = 0;
  double init_scale = 0.3;
  std::string metrics = "-";
  bool push_grads = false;
  bool push_neighbor_grads = false;
  bool initial_ckpt = false;
  std::vector<std::string> await_ns;
  uint32_t timeout_ms = 5000;
  std::string source = "trainer-0";
};

void await_versions(kb::rpc::BankClient& client, const std::vector<std::string>& spaces,
                    const std::vector<std::string>& ids, uint64_t step) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(120);
  for (const auto& ns : spaces) {
    std::vector<kb::KnowledgeKey> keys;
    for (const auto& id : ids) keys.push_back({ns, id});
    while (true) {
      const auto entries = client.peek(keys);
      const bool ready = std::all_of(entries.begin(), entries.end(), [&](const auto& e) {
        return e && e->version >= step;
      });
      if (ready) break;
      if (g_stop.load() || std::chrono::steady_clock::now() > deadline) {
        kb::throw_error(kb::ErrorCode::kTimeout, "embeddings in '" + ns + "' never reached step " +
                                                     std::to_string(step));
      }
      std::this_thread::sleep_for(milliseconds(1));
    }
  }
}

int trainer_run(const TrainerArgs& a) {
  const auto ds = kb::harness::load_dataset(a.data);
  kb::trainer::TrainerData data;
  for (const auto& it : ds.items) {
    if (it.split != kb::harness::Split::kTrain) continue;
    data.ids.push_back(it.id);
    data.x.push_back(it.x);
    if (!it.y.empty()) data.y.push_back(it.y);
    data.labels.push_back(it.observed);
  }
  if (data.ids.empty()) kb::throw_error(kb::ErrorCode::kConfigError, "dataset has no training items");

  kb::trainer::TrainerConfig cfg;
  cfg.spec.variant = kb::trainer::parse_variant(a.variant);
  cfg.spec.input_dim = static_cast<uint32_t>(data.x.front().size());
  cfg.spec.input_dim_b = data.y.empty() ? 0 : static_cast<uint32_t>(data.y.front().size());
  cfg.spec.hidden_dim = a.hidden;
  cfg.spec.num_classes = ds.classes;
  cfg.spec.temperature = a.tau_c;
  cfg.spec.lambda = a.lambda;
  cfg.spec.fresh_fraction = a.rho;
  cfg.spec.init_scale = a.init_scale;
  cfg.lr = a.lr;
  cfg.steps = a.steps;
  cfg.seed = a.seed;
  cfg.batch_size = a.batch_size;
  cfg.num_negatives = a.negatives;
  cfg.ckpt_dir = a.ckpt_dir;
  cfg.ckpt_every = a.ckpt_every;
  cfg.push_own_grads = a.push_grads;
  cfg.push_neighbor_grads = a.push_neighbor_grads;
  cfg.source = a.source;

  std::optional<kb::rpc::BankClient> client;
  if (!a.bank.empty()) client.emplace(connect_with_retry(a.bank, milliseconds(a.timeout_ms)));
  const auto ids = data.ids;
  kb::trainer::Trainer tr(cfg, std::move(data), client ? &*client : nullptr);
  if (!a.ckpt_dir.empty()) fs::create_directories(a.ckpt_dir);
  if (a.initial_ckpt && !a.ckpt_dir.empty()) tr.save_checkpoint();

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (a.metrics != "-") {
    file.open(a.metrics, std::ios::trunc);
    if (!file) kb::throw_error(kb::ErrorCode::kIoError, "cannot write " + a.metrics);
    out = &file;
  }
  *out << kb::trainer::kMetricsHeader << '\n';
  uint64_t last_ckpt = a.initial_ckpt ? 0 : UINT64_MAX;
  while (tr.global_step() < cfg.steps && !g_stop.load()) {
    const uint64_t t = tr.global_step();
    const bool fresh_ckpt = t == last_ckpt;
    if (client && !a.await_ns.empty() && fresh_ckpt) await_versions(*client, a.await_ns, ids, t);
    const auto row = tr.step();
    if (cfg.ckpt_every && row.step % cfg.ckpt_every == 0) last_ckpt = row.step;
    *out << kb::trainer::format_metrics_row(row) << '\n' << std::flush;
  }
  if (!a.ckpt_dir.empty() && last_ckpt != tr.global_step()) tr.save_checkpoint();
  spdlog::info("trainer finished at step {} (stale skips {})", tr.global_step(), tr.stale_skips());
  return 0;
}

// ---- scenario ----

struct ScenarioArgs {
  std::string config;
  std::string name;
  std::string mode = "deterministic";
  std::string out;
  std::optional<uint64_t> seed;
  std::optional<uint64_t> staleness;
  std::vector<std::string> sets;
  std::string binary;
};

kb::harness::Scenario build_scenario(const ScenarioArgs& a) {
  nlohmann::json j;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) kb::throw_error(kb::ErrorCode::kIoError, "cannot open " + a.config);
    j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) kb::throw_error(kb::ErrorCode::kConfigError, a.config + ": invalid JSON");
  }
  if (!a.name.empty()) j["name"] = a.name;
  if (!j.contains("name")) kb::throw_error(kb::ErrorCode::kConfigError, "need --name or --config");
  if (a.seed) j["seed"] = *a.seed;
  if (a.staleness) j["system"]["staleness"] = *a.staleness;
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) kb::throw_error(kb::ErrorCode::kConfigError, "--set needs key=value");
    std::string path = "/" + kv.substr(0, eq);
    std::replace(path.begin(), path.end(), '.', '/');
    auto value = nlohmann::json::parse(kv.substr(eq + 1), nullptr, false);
    if (value.is_discarded()) value = kv.substr(eq + 1);
    j[nlohmann::json::json_pointer(path)] = value;
  }
  auto s = j.get<kb::harness::Scenario>();
  kb::harness::validate_scenario(s);
  return s;
}

int scenario_run(const ScenarioArgs& a) {
  const auto s = build_scenario(a);
  const auto t0 = std::chrono::steady_clock::now();
  kb::harness::RunResult r;
  if (a.mode == "deterministic") {
    r = kb::harness::run_deterministic(s);
  } else if (a.mode == "networked") {
    const fs::path bin = a.binary.empty() ? fs::read_symlink("/proc/self/exe") : fs::path(a.binary);
    r = kb::harness::run_networked(s, bin, a.out);
  } else {
    kb::throw_error(kb::ErrorCode::kConfigError, "--mode is deterministic or networked");
  }
  kb::harness::write_outputs(r, a.out);
  kb::harness::save_scenario(s, fs::path(a.out) / "scenario.json");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::info("{} ({}) finished in {:.2f} s", kb::harness::scenario_name(s.name), a.mode, secs);
  std::cout << r.summary.dump(2) << std::endl;
  return 0;
}

struct CompareArgs {
  std::string a;
  std::string b;
  double tol_loss = 1e-5;
  double tol_acc = 1e-3;
  std::string out;
};

int scenario_compare(const CompareArgs& a) {
  const auto rep = kb::harness::compare_runs(fs::path(a.a), fs::path(a.b), {a.tol_loss, a.tol_acc});
  const auto j = rep.to_json();
  std::cout << j.dump(2) << std::endl;
  if (!a.out.empty()) std::ofstream(a.out, std::ios::trunc) << j.dump(2) << '\n';
  return rep.pass ? 0 : 1;
}

// ---- data gen ----

struct DataArgs {
  std::string kind = "blobs";
  std::string out;
  std::string scenario;
  uint64_t seed = 1;
  uint32_t n = 1000;
  uint32_t dims = 40;
  uint32_t dims_b = 24;
  uint32_t latent_dim = 8;
  uint32_t classes = 4;
  double noise = 0.0;
  double separation = 4.0;
  double p_in = 0.2;
  double p_out = 0.01;
  double labeled_fraction = 1.0;
  uint32_t test_n = 0;
};

int data_gen(const DataArgs& a) {
  kb::harness::SyntheticDataset ds;
  if (!a.scenario.empty()) {
    ds = kb::harness::make_dataset(kb::harness::load_scenario(a.scenario));
  } else if (a.kind == "blobs") {
    ds = kb::harness::gen_blobs({a.n, a.dims, a.classes, a.separation, a.noise, a.labeled_fraction,
                                 a.test_n, a.seed});
  } else if (a.kind == "sbm") {
    ds = kb::harness::gen_sbm({a.n, a.classes, a.p_in, a.p_out, a.dims, a.separation,
                               a.labeled_fraction, a.seed});
  } else if (a.kind == "pairs") {
    ds = kb::harness::gen_pairs({a.n, a.test_n, a.latent_dim, a.dims, a.dims_b, a.noise, a.seed});
  } else {
    kb::throw_error(kb::ErrorCode::kConfigError, "--kind is blobs, sbm or pairs");
  }
  kb::harness::save_dataset(ds, a.out);
  spdlog::info("wrote {} items and {} edges to {}", ds.items.size(), ds.edges.size(), a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowbank: knowledge bank, makers, trainers and scenario harness"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  BankArgs bank;
  auto* bank_cmd = app.add_subcommand("bank", "Knowledge bank service");
  bank_cmd->require_subcommand(1);
  auto* serve = bank_cmd->add_subcommand("serve", "Serve a bank over TCP");
  serve->add_option("--config", bank.config, "Bank config JSON")->required();
  serve->add_option("--host", bank.host);
  serve->add_option("--port", bank.port, "0 picks a free port");
  serve->add_option("--port-file", bank.port_file, "Write the bound port here");
  serve->add_option("--workers", bank.workers);
  serve->add_option("--max-frame", bank.max_frame, "Largest accepted payload in bytes");
  serve->add_option("--tick-ms", bank.tick_ms, "Wall-clock expiry tick period (0 = off)");
  serve->add_option("--snapshot-dir", bank.snapshot_dir, "Write a snapshot here on shutdown");
  serve->add_option("--load-snapshot", bank.load_snapshot, "Start from a snapshot directory");

  MakerArgs mk;
  auto* maker_cmd = app.add_subcommand("maker", "Knowledge maker worker");
  maker_cmd->require_subcommand(1);
  auto* mrun = maker_cmd->add_subcommand("run", "Poll checkpoints and push knowledge");
  mrun->add_option("--task", mk.task, "embed_refresh, label_mine, graph_agree or graph_build")
      ->required();
  mrun->add_option("--bank", mk.bank, "host:port")->required();
  mrun->add_option("--checkpoint-dir", mk.checkpoint_dir)->required();
  mrun->add_option("--input", mk.input, "Item file")->required();
  mrun->add_option("--poll-ms", mk.poll_ms);
  mrun->add_option("--tau", mk.tau, "Label mining confidence threshold");
  mrun->add_option("--k", mk.k, "Neighbors per query");
  mrun->add_option("--sigma-min", mk.sigma_min, "Edge similarity floor");
  mrun->add_option("--seed", mk.seed, "Accepted for uniformity; makers are deterministic");
  mrun->add_option("--batch-size", mk.batch_size);
  mrun->add_option("--param", mk.param, "Encoder parameter name");
  mrun->add_option("--features-ns", mk.features_ns);
  mrun->add_option("--embedding-ns", mk.embedding_ns);
  mrun->add_option("--labeled-ns", mk.labeled_ns);
  mrun->add_option("--metric", mk.metric, "cosine or neg_l2 (graph_agree)");
  mrun->add_option("--partition", mk.partition, "i/n: handle items with shard_of(key, n) == i");
  mrun->add_flag("--once", mk.once, "Exit after one full pass");
  mrun->add_option("--throttle-ms", mk.throttle_ms, "Pause between batches");
  mrun->add_option("--timeout-ms", mk.timeout_ms, "RPC timeout");

  TrainerArgs tr;
  auto* trainer_cmd = app.add_subcommand("trainer", "Model trainer");
  trainer_cmd->require_subcommand(1);
  auto* trun = trainer_cmd->add_subcommand("run", "Train and write checkpoints");
  trun->add_option("--variant", tr.variant, "graph_reg, encoder_gnn or two_tower")->required();
  trun->add_option("--bank", tr.bank, "host:port; omit for a bank-free run");
  trun->add_option("--ckpt-dir", tr.ckpt_dir);
  trun->add_option("--data", tr.data, "Dataset directory")->required();
  trun->add_option("--lr", tr.lr);
  trun->add_option("--lambda", tr.lambda, "Graph regularizer weight");
  trun->add_option("--tau-c", tr.tau_c, "Contrastive temperature");
  trun->add_option("--rho", tr.rho, "Fresh fraction of each pair batch");
  trun->add_option("--steps", tr.steps);
  trun->add_option("--seed", tr.seed);
  trun->add_option("--ckpt-every", tr.ckpt_every);
  trun->add_option("--hidden", tr.hidden);
  trun->add_option("--batch-size", tr.batch_size, "0 = full batch");
  trun->add_option("--negatives", tr.negatives, "Cached negatives per step");
  trun->add_option("--init-scale", tr.init_scale);
  trun->add_option("--metrics", tr.metrics, "CSV path or - for stdout");
  trun->add_flag("--push-grads", tr.push_grads, "Push own-embedding gradients");
  trun->add_flag("--push-neighbor-grads", tr.push_neighbor_grads);
  trun->add_flag("--initial-ckpt", tr.initial_ckpt, "Write a step-0 checkpoint first");
  trun->add_option("--await-ns", tr.await_ns,
                   "Before stepping past a checkpoint, wait until this namespace reaches its step");
  trun->add_option("--timeout-ms", tr.timeout_ms, "RPC timeout");
  trun->add_option("--source", tr.source);

  ScenarioArgs sc;
  std::optional<uint64_t> sc_seed, sc_stale;
  auto* scenario_cmd = app.add_subcommand("scenario", "Scenario harness");
  scenario_cmd->require_subcommand(1);
  auto* srun = scenario_cmd->add_subcommand("run", "Run a scenario");
  srun->add_option("--config", sc.config, "Scenario JSON");
  srun->add_option("--name", sc.name, "Scenario name (uses its defaults)");
  srun->add_option("--mode", sc.mode, "deterministic or networked");
  srun->add_option("--out", sc.out, "Output directory")->required();
  srun->add_option("--seed", sc_seed);
  srun->add_option("--staleness", sc_stale, "Maker lag in steps");
  srun->add_option("--set", sc.sets, "Override a field, e.g. training.lambda=0");
  srun->add_option("--binary", sc.binary, "knowbank binary for networked mode");

  CompareArgs cmp;
  auto* scmp = scenario_cmd->add_subcommand("compare", "Compare two runs");
  scmp->add_option("a", cmp.a, "Run directory or metrics CSV")->required();
  scmp->add_option("b", cmp.b, "Run directory or metrics CSV")->required();
  scmp->add_option("--tol-loss", cmp.tol_loss);
  scmp->add_option("--tol-acc", cmp.tol_acc);
  scmp->add_option("--out", cmp.out, "Write the report JSON here");

  DataArgs dg;
  auto* data_cmd = app.add_subcommand("data", "Synthetic datasets");
  data_cmd->require_subcommand(1);
  auto* gen = data_cmd->add_subcommand("gen", "Generate a dataset directory");
  gen->add_option("--kind", dg.kind, "blobs, sbm or pairs");
  gen->add_option("--scenario", dg.scenario, "Take parameters from a scenario file");
  gen->add_option("--out", dg.out)->required();
  gen->add_option("--seed", dg.seed);
  gen->add_option("--n", dg.n);
  gen->add_option("--dims", dg.dims);
  gen->add_option("--dims-b", dg.dims_b);
  gen->add_option("--latent-dim", dg.latent_dim);
  gen->add_option("--classes", dg.classes);
  gen->add_option("--noise", dg.noise);
  gen->add_option("--separation", dg.separation);
  gen->add_option("--p-in", dg.p_in);
  gen->add_option("--p-out", dg.p_out);
  gen->add_option("--labeled-fraction", dg.labeled_fraction);
  gen->add_option("--test-n", dg.test_n);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));
  install_signals();
  sc.seed = sc_seed;
  sc.staleness = sc_stale;

  try {
    if (serve->parsed()) return bank_serve(bank);
    if (mrun->parsed()) return maker_run(mk);
    if (trun->parsed()) return trainer_run(tr);
    if (srun->parsed()) return scenario_run(sc);
    if (scmp->parsed()) return scenario_compare(cmp);
    if (gen->parsed()) return data_gen(dg);
  } catch (const kb::Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 2;
}
