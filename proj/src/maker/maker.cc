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
#include "knowbank/maker/maker.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <thread>

#include "knowbank/core/codec.h"
#include "knowbank/core/error.h"
#include "knowbank/core/hash.h"
#include "knowbank/core/overloaded.h"
#include "knowbank/trainer/model.h"

namespace knowbank::maker {

namespace fs = std::filesystem;

const char* task_name(Task t) {
  switch (t) {
    case Task::kEmbedRefresh:
      return "embed_refresh";
    case Task::kLabelMine:
      return "label_mine";
    case Task::kGraphAgree:
      return "graph_agree";
    case Task::kGraphBuild:
      return "graph_build";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  for (Task t : {Task::kEmbedRefresh, Task::kLabelMine, Task::kGraphAgree, Task::kGraphBuild}) {
    if (name == task_name(t)) return t;
  }
  throw_error(ErrorCode::kConfigError, "unknown maker task '" + std::string(name) + "'");
}

void validate_config(const MakerConfig& c) {
  auto fail = [](const std::string& m) { throw_error(ErrorCode::kConfigError, m); };
  if (c.poll_interval.count() <= 0) fail("poll_interval must be positive");
  if (c.batch_size < 1) fail("batch_size must be at least 1");
  if (!(c.options.tau > 0.0 && c.options.tau < 1.0)) fail("tau must lie in (0, 1)");
  if (c.options.k < 1) fail("k must be at least 1");
  if (c.partitions < 1 || c.partition >= c.partitions) fail("partition out of range");
  if (c.initial_backoff.count() <= 0 || c.max_backoff < c.initial_backoff) fail("bad backoff");
}

std::optional<uint64_t> checkpoint_step(const fs::path& file) {
  const std::string name = file.filename().string();
  constexpr std::string_view prefix = "ckpt-", suffix = ".ckb";
  if (name.size() <= prefix.size() + suffix.size() || !name.starts_with(prefix) ||
      !name.ends_with(suffix)) {
    return std::nullopt;
  }
  const char* b = name.data() + prefix.size();
  const char* e = name.data() + name.size() - suffix.size();
  uint64_t step = 0;
  auto [p, ec] = std::from_chars(b, e, step);
  if (ec != std::errc{} || p != e) return std::nullopt;
  return step;
}

bool CheckpointPoller::poll() {
  std::error_code ec;
  if (!fs::is_directory(dir_, ec)) {
    throw_error(ErrorCode::kIoError, "checkpoint directory missing: " + dir_.string());
  }
  std::vector<std::pair<uint64_t, fs::path>> found;
  for (const auto& ent : fs::directory_iterator(dir_, ec)) {
    auto step = checkpoint_step(ent.path());
    if (!step || bad_.count(ent.path())) continue;
    if (current_ && *step <= current_->step) {
      if (*step < current_->step) {
        spdlog::info("ignoring checkpoint {} below loaded step {}", ent.path().string(),
                     current_->step);
        bad_.insert(ent.path());
      }
      continue;
    }
    found.emplace_back(*step, ent.path());
  }
  if (ec) throw_error(ErrorCode::kIoError, "cannot list " + dir_.string() + ": " + ec.message());
  std::sort(found.begin(), found.end(), std::greater<>());
  for (const auto& [step, path] : found) {
    try {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw_error(ErrorCode::kIoError, "cannot open");
      const std::string bytes((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
      Checkpoint ck = decode_checkpoint(bytes);
      if (ck.step != step) throw_error(ErrorCode::kMalformedPayload, "step does not match name");
      current_ = std::move(ck);
      return true;
    } catch (const Error& e) {
      spdlog::warn("skipping checkpoint {}: {}", path.string(), e.what());
      bad_.insert(path);
    }
  }
  return false;
}

std::optional<Checkpoint> latest_checkpoint(const fs::path& dir) {
  CheckpointPoller p(dir);
  p.poll();
  return p.current();
}

namespace {

MatrixD load_param(const Checkpoint& ck, std::string_view name_view) {
  const std::string name(name_view);
  auto it = ck.params.find(name);
  if (it == ck.params.end()) {
    throw_error(ErrorCode::kConfigError, "checkpoint lacks parameter '" + name + "'");
  }
  MatrixD m(it->second.rows, it->second.cols);
  std::copy(it->second.data.begin(), it->second.data.end(), m.data.begin());
  return m;
}

// Forward pass up to the class posterior.
struct Classifier {
  MatrixD w;
  std::optional<MatrixD> u;
  MatrixD v;

  Classifier(const Checkpoint& ck, const std::string& param)
      : w(load_param(ck, param)), v(load_param(ck, trainer::kClassifierV)) {
    if (ck.params.count(std::string(trainer::kGnnU))) u = load_param(ck, trainer::kGnnU);
  }

  std::vector<double> operator()(std::span<const float> x) const {
    auto h = trainer::encode(w, x);
    if (u) h = trainer::encode(*u, std::span<const double>(h));
    return trainer::classify(v, h);
  }
};

size_t argmax(std::span<const double> p) {
  return static_cast<size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

size_t argmax(std::span<const float> p) {
  return static_cast<size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

void check_responses(const std::vector<rpc::Response>& resps) {
  for (const auto& r : resps) {
    if (const auto* err = std::get_if<rpc::ErrorResponse>(&r)) throw_error(err->code, err->message);
  }
}

std::vector<KnowledgeKey> keys_in(const std::string& ns, std::span<const Item> items) {
  std::vector<KnowledgeKey> keys;
  keys.reserve(items.size());
  for (const auto& it : items) keys.push_back({ns, it.id});
  return keys;
}

size_t send(rpc::BankClient& client, const std::vector<rpc::Request>& reqs) {
  if (reqs.empty()) return 0;
  check_responses(client.call_batch(reqs));
  return reqs.size();
}

std::vector<std::vector<KnnHit>> knn_all(rpc::BankClient& client,
                                         const std::vector<rpc::Request>& reqs) {
  auto resps = client.call_batch(reqs);
  check_responses(resps);
  std::vector<std::vector<KnnHit>> out;
  out.reserve(resps.size());
  for (auto& r : resps) {
    auto* k = std::get_if<rpc::KnnResponse>(&r);
    if (!k) throw_error(ErrorCode::kMalformedPayload, "expected a knn response");
    out.push_back(std::move(k->hits));
  }
  return out;
}

}  // namespace

std::vector<double> posterior(const Checkpoint& ckpt, std::span<const float> x,
                              const std::string& param) {
  return Classifier(ckpt, param)(x);
}

size_t embed_refresh(const Checkpoint& ckpt, std::span<const Item> items,
                     rpc::BankClient& client, const TaskOptions& opt) {
  const MatrixD w = load_param(ckpt, opt.param);
  auto keys = keys_in(opt.embedding_ns, items);
  const auto stored = client.peek(keys);
  std::vector<rpc::Request> reqs;
  for (size_t i = 0; i < items.size(); ++i) {
    if (stored[i] && stored[i]->version > ckpt.step) continue;  // never lower a version
    reqs.push_back(rpc::SetEmbRequest{keys[i], trainer::to_vector(trainer::encode(w, items[i].features)),
                                      ckpt.step});
  }
  return send(client, reqs);
}

size_t label_mine(const Checkpoint& ckpt, std::span<const Item> items, rpc::BankClient& client,
                  const TaskOptions& opt) {
  const Classifier model(ckpt, opt.param);
  auto keys = keys_in(opt.features_ns, items);
  const auto existing = client.lookup_features(keys);
  std::vector<rpc::Request> reqs;
  for (size_t i = 0; i < items.size(); ++i) {
    const auto p = model(items[i].features);
    const size_t c = argmax(p);
    if (p[c] < opt.tau) continue;
    FeatureRecord rec = existing[i].value_or(FeatureRecord{});
    Vector onehot(p.size(), 0.0f);
    onehot[c] = 1.0f;
    rec.label_dist = std::move(onehot);
    rec.label_source = LabelSource::kMined;
    reqs.push_back(rpc::SetFeatRequest{keys[i], std::move(rec)});
  }
  return send(client, reqs);
}

size_t graph_agree(const Checkpoint& ckpt, std::span<const Item> items, rpc::BankClient& client,
                   const TaskOptions& opt) {
  const MatrixD w = load_param(ckpt, opt.param);
  auto keys = keys_in(opt.features_ns, items);
  const auto existing = client.lookup_features(keys);

  std::vector<size_t> todo;
  std::vector<rpc::Request> queries;
  for (size_t i = 0; i < items.size(); ++i) {
    // Observed labels are never replaced by inferred ones.
    if (existing[i] && existing[i]->label_source == LabelSource::kObserved) continue;
    todo.push_back(i);
    queries.push_back(rpc::KnnRequest{opt.labeled_ns,
                                      trainer::to_vector(trainer::encode(w, items[i].features)),
                                      opt.k, opt.metric});
  }
  if (todo.empty()) return 0;
  const auto hits = knn_all(client, queries);

  std::vector<KnowledgeKey> label_keys;
  for (const auto& hs : hits) {
    for (const auto& h : hs) label_keys.push_back({opt.features_ns, h.key.id});
  }
  std::sort(label_keys.begin(), label_keys.end());
  label_keys.erase(std::unique(label_keys.begin(), label_keys.end()), label_keys.end());
  std::map<std::string, uint32_t> label_of;
  size_t classes = 0;
  if (!label_keys.empty()) {
    const auto recs = client.lookup_features(label_keys);
    for (size_t j = 0; j < recs.size(); ++j) {
      if (!recs[j] || !recs[j]->label_dist || recs[j]->label_dist->empty()) continue;
      label_of[label_keys[j].id] = static_cast<uint32_t>(argmax(*recs[j]->label_dist));
      classes = std::max(classes, recs[j]->label_dist->size());
    }
  }

  std::vector<rpc::Request> reqs;
  for (size_t t = 0; t < todo.size(); ++t) {
    std::vector<double> dist(classes, 0.0);
    double total = 0.0;
    for (const auto& h : hits[t]) {
      auto it = label_of.find(h.key.id);
      if (it == label_of.end() || h.score <= 0.0) continue;
      dist[it->second] += h.score;
      total += h.score;
    }
    if (total <= 0.0) continue;
    const size_t i = todo[t];
    FeatureRecord rec = existing[i].value_or(FeatureRecord{});
    Vector ld(classes);
    for (size_t c = 0; c < classes; ++c) ld[c] = static_cast<float>(dist[c] / total);
    rec.label_dist = std::move(ld);
    rec.label_source = LabelSource::kInferred;
    reqs.push_back(rpc::SetFeatRequest{keys[i], std::move(rec)});
  }
  return send(client, reqs);
}

size_t graph_build(std::span<const Item> items, rpc::BankClient& client, const TaskOptions& opt) {
  const auto emb = client.peek(keys_in(opt.embedding_ns, items));
  std::vector<size_t> todo;
  std::vector<rpc::Request> queries;
  for (size_t i = 0; i < items.size(); ++i) {
    if (!emb[i]) continue;
    todo.push_back(i);
    queries.push_back(rpc::KnnRequest{opt.embedding_ns, emb[i]->vector, opt.k + 1, Metric::kCosine});
  }
  if (todo.empty()) return 0;
  const auto hits = knn_all(client, queries);
  std::vector<KnowledgeKey> keys;
  for (size_t i : todo) keys.push_back({opt.features_ns, items[i].id});
  const auto existing = client.lookup_features(keys);

  // Edge weights must be non-negative, so the floor is at least zero.
  const double floor = std::max(opt.sigma_min, 0.0);
  std::vector<rpc::Request> reqs;
  for (size_t t = 0; t < todo.size(); ++t) {
    FeatureRecord rec = existing[t].value_or(FeatureRecord{});
    rec.neighbors.clear();
    for (const auto& h : hits[t]) {
      if (h.key.id == items[todo[t]].id || h.score < floor) continue;
      if (rec.neighbors.size() == opt.k) break;
      rec.neighbors.push_back({h.key, static_cast<float>(h.score)});
    }
    reqs.push_back(rpc::SetFeatRequest{keys[t], std::move(rec)});
  }
  return send(client, reqs);
}

size_t run_task(Task task, const Checkpoint& ckpt, std::span<const Item> items,
                rpc::BankClient& client, const TaskOptions& opt) {
  switch (task) {
    case Task::kEmbedRefresh:
      return embed_refresh(ckpt, items, client, opt);
    case Task::kLabelMine:
      return label_mine(ckpt, items, client, opt);
    case Task::kGraphAgree:
      return graph_agree(ckpt, items, client, opt);
    case Task::kGraphBuild:
      return graph_build(items, client, opt);
  }
  return 0;
}

Maker::Maker(MakerConfig config, std::vector<Item> items, rpc::BankClient& client)
    : config_(std::move(config)), client_(&client), poller_(config_.checkpoint_dir) {
  validate_config(config_);
  const std::string& ns = config_.task == Task::kEmbedRefresh ? config_.options.embedding_ns
                                                              : config_.options.features_ns;
  for (auto& it : items) {
    if (shard_of({ns, it.id}, config_.partitions) == config_.partition) {
      items_.push_back(std::move(it));
    }
  }
}

Maker::Status Maker::step() {
  if (poller_.poll()) {
    state_.loaded_step = poller_.current()->step;
    state_.loaded = true;
    spdlog::info("{} maker loaded checkpoint step {}", task_name(config_.task), state_.loaded_step);
  }
  if (!poller_.current()) return Status::kIdle;
  if (!pass_step_ || (pass_done_ && state_.loaded_step > *pass_step_)) {
    pass_step_ = state_.loaded_step;
    cursor_ = 0;
    pass_done_ = items_.empty();
  }
  if (pass_done_) return Status::kIdle;

  const size_t n = std::min<size_t>(config_.batch_size, items_.size() - cursor_);
  const std::span<const Item> batch(items_.data() + cursor_, n);
  try {
    run_task(config_.task, *poller_.current(), batch, *client_, config_.options);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kTimeout && e.code() != ErrorCode::kConnectionLost) throw;
    state_.last_error = e.what();
    backoff_ = backoff_.count() == 0 ? config_.initial_backoff
                                     : std::min(backoff_ * 2, config_.max_backoff);
    spdlog::warn("batch at {} failed ({}); retrying in {} ms", cursor_, e.what(), backoff_.count());
    if (e.code() == ErrorCode::kConnectionLost && reconnect_) {
      try {
        owned_.emplace(reconnect_());
        client_ = &*owned_;
      } catch (const Error& re) {
        state_.last_error = re.what();
      }
    }
    return Status::kRetry;
  }
  backoff_ = std::chrono::milliseconds(0);
  state_.items_processed += n;
  cursor_ += n;
  if (cursor_ >= items_.size()) pass_done_ = true;
  return Status::kProcessed;
}

void Maker::run(const std::atomic<bool>& stop, uint64_t max_batches) {
  uint64_t batches = 0;
  while (!stop.load()) {
    const Status s = step();
    if (s == Status::kProcessed) {
      if (max_batches && ++batches >= max_batches) return;
      continue;
    }
    const auto wait = s == Status::kRetry ? backoff_ : config_.poll_interval;
    const auto until = std::chrono::steady_clock::now() + wait;
    while (!stop.load() && std::chrono::steady_clock::now() < until) {
      std::this_thread::sleep_for(std::min(std::chrono::milliseconds(10), wait));
    }
  }
}

}  // namespace knowbank::maker
