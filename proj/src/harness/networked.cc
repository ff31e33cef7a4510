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
#include <spdlog/spdlog.h>

#include <fstream>
#include <thread>

#include "knowbank/core/error.h"
#include "knowbank/harness/bank_config.h"
#include "knowbank/harness/process.h"
#include "knowbank/harness/scenario.h"
#include "knowbank/harness/simulation.h"
#include "knowbank/maker/maker.h"
#include "knowbank/rpc/client.h"

namespace knowbank::harness {

namespace fs = std::filesystem;
using std::chrono::milliseconds;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

uint16_t wait_for_port(const fs::path& file, Process& bank, milliseconds timeout) {
  const auto until = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < until) {
    std::ifstream in(file);
    unsigned port = 0;
    if (in >> port && port > 0) return static_cast<uint16_t>(port);
    if (!bank.running()) break;
    std::this_thread::sleep_for(milliseconds(10));
  }
  throw_error(ErrorCode::kTimeout, "bank did not report a port:\n" + tail_file(bank.log()));
}

}  // namespace

RunResult run_networked(const Scenario& s, const fs::path& binary, const fs::path& out_dir) {
  validate_scenario(s);
  Simulation sim(s);
  fs::create_directories(out_dir);
  const fs::path data = out_dir / "data", ckpt = out_dir / "ckpt", jobs = out_dir / "jobs";
  fs::remove_all(ckpt);
  fs::create_directories(ckpt);
  fs::create_directories(jobs);
  save_dataset(sim.dataset(), data);
  save_scenario(s, out_dir / "scenario.json");
  BankConfig bc;
  bc.options.num_shards = s.system.num_shards;
  bc.options.flush_on_scan = false;
  bc.namespaces = sim.namespaces();
  save_bank_config(bc, out_dir / "bank.json");

  const std::string bin = binary.string();
  fs::remove(out_dir / "bank.port");
  Process bank = Process::spawn({bin, "bank", "serve", "--port", "0", "--port-file",
                                 (out_dir / "bank.port").string(), "--config",
                                 (out_dir / "bank.json").string()},
                                out_dir / "bank.log");
  const uint16_t port = wait_for_port(out_dir / "bank.port", bank, milliseconds(10000));
  const std::string endpoint = "127.0.0.1:" + std::to_string(port);
  rpc::BankClient client = rpc::BankClient::connect(endpoint);
  sim.seed_bank(client);

  const bool per_step = sim.runs_every_step();
  const auto cfg = sim.trainer_config();
  std::vector<Process> makers;
  std::vector<std::string> await_ns;
  for (const MakerJob& job : sim.maker_jobs()) {
    std::vector<maker::Item> items = job.items;
    const fs::path input = jobs / (job.name + "-" + maker::task_name(job.task) + ".tsv");
    maker::write_items(input, items);
    if (job.task == maker::Task::kEmbedRefresh && per_step && s.system.staleness == 0) {
      await_ns.push_back(job.options.embedding_ns);
    }
    for (uint32_t m = 0; m < s.system.makers; ++m) {
      const std::string tag = job.name + "-" + maker::task_name(job.task) + "-" + std::to_string(m);
      makers.push_back(Process::spawn(
          {bin, "maker", "run", "--task", maker::task_name(job.task), "--bank", endpoint,
           "--checkpoint-dir", ckpt.string(), "--input", input.string(), "--poll-ms",
           std::to_string(s.system.maker_poll_ms), "--tau", fmt_double(job.options.tau), "--k",
           std::to_string(job.options.k), "--seed", std::to_string(s.seed), "--batch-size",
           std::to_string(s.system.maker_batch), "--param", job.options.param, "--features-ns",
           job.options.features_ns, "--embedding-ns", job.options.embedding_ns, "--labeled-ns",
           job.options.labeled_ns, "--partition",
           std::to_string(m) + "/" + std::to_string(s.system.makers)},
          out_dir / ("maker-" + tag + ".log")));
    }
  }

  uint64_t ckpt_every = 1;
  if (!per_step) {
    const auto rounds = sim.round_steps();
    ckpt_every = rounds.empty() ? s.training.steps : std::max<uint64_t>(1, rounds.front());
  }
  std::vector<std::string> targv{bin,
                                 "trainer",
                                 "run",
                                 "--variant",
                                 trainer::variant_name(cfg.spec.variant),
                                 "--bank",
                                 endpoint,
                                 "--ckpt-dir",
                                 ckpt.string(),
                                 "--data",
                                 data.string(),
                                 "--lr",
                                 fmt_double(cfg.lr),
                                 "--lambda",
                                 fmt_double(cfg.spec.lambda),
                                 "--tau-c",
                                 fmt_double(cfg.spec.temperature),
                                 "--rho",
                                 fmt_double(cfg.spec.fresh_fraction),
                                 "--steps",
                                 std::to_string(cfg.steps),
                                 "--seed",
                                 std::to_string(cfg.seed),
                                 "--ckpt-every",
                                 std::to_string(ckpt_every),
                                 "--hidden",
                                 std::to_string(cfg.spec.hidden_dim),
                                 "--batch-size",
                                 std::to_string(cfg.batch_size),
                                 "--negatives",
                                 std::to_string(cfg.num_negatives),
                                 "--init-scale",
                                 fmt_double(cfg.spec.init_scale),
                                 "--metrics",
                                 (out_dir / "metrics.csv").string()};
  if (cfg.push_own_grads) targv.push_back("--push-grads");
  if (per_step) targv.push_back("--initial-ckpt");
  for (const auto& ns : await_ns) {
    targv.push_back("--await-ns");
    targv.push_back(ns);
  }
  Process tr = Process::spawn(targv, out_dir / "trainer.log");
  const auto code = tr.wait(milliseconds(30 * 60 * 1000));
  for (auto& m : makers) m.stop();

  std::string failure;
  if (!code || *code != 0) {
    failure = "trainer failed (" + (code ? std::to_string(*code) : std::string("timeout")) +
              "):\n" + tail_file(tr.log());
  }
  BankContents contents;
  if (failure.empty()) {
    std::vector<KnowledgeKey> keys;
    for (const auto& it : sim.dataset().items) {
      if (it.split == Split::kTrain) keys.push_back({"features", it.id});
    }
    const auto recs = client.lookup_features(keys);
    for (size_t i = 0; i < keys.size(); ++i) {
      if (recs[i]) contents.features.emplace(keys[i], *recs[i]);
    }
  }
  client.close();
  bank.stop();
  if (!failure.empty()) throw_error(ErrorCode::kUnknown, failure);

  RunResult r;
  r.metrics = trainer::read_metrics(out_dir / "metrics.csv");
  const auto last = maker::latest_checkpoint(ckpt);
  if (!last) throw_error(ErrorCode::kIoError, "trainer left no checkpoint in " + ckpt.string());
  r.bank = std::move(contents);
  r.summary = sim.summarize(last->params, r.metrics, {}, r.bank);
  r.summary["mode"] = "networked";
  return r;
}

}  // namespace knowbank::harness
