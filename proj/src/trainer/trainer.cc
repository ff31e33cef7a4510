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
#include "knowbank/trainer/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "knowbank/core/codec.h"
#include "knowbank/core/error.h"

namespace knowbank::trainer {

namespace {

bool is_bank_unavailable(const Error& e) {
  return e.code() == ErrorCode::kTimeout || e.code() == ErrorCode::kConnectionLost;
}

}  // namespace

std::string format_metrics_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%llu,%.17g",
                static_cast<unsigned long long>(r.step), r.loss, r.accuracy,
                static_cast<unsigned long long>(r.stale_skips), r.mean_neighbor_version_lag);
  return buf;
}

MetricsRow parse_metrics_row(const std::string& line) {
  MetricsRow r;
  std::istringstream in(line);
  std::string field;
  std::vector<std::string> fields;
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (fields.size() != 5) {
    throw_error(ErrorCode::kSchemaMismatch, "metrics row needs 5 fields: '" + line + "'");
  }
  try {
    r.step = std::stoull(fields[0]);
    r.loss = std::stod(fields[1]);
    r.accuracy = std::stod(fields[2]);
    r.stale_skips = std::stoull(fields[3]);
    r.mean_neighbor_version_lag = std::stod(fields[4]);
  } catch (const std::exception&) {
    throw_error(ErrorCode::kSchemaMismatch, "unparsable metrics row '" + line + "'");
  }
  return r;
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorCode::kIoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw_error(ErrorCode::kSchemaMismatch, path.string() + ": unexpected metrics header");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse_metrics_row(line));
  }
  return rows;
}

void write_metrics(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw_error(ErrorCode::kIoError, "cannot write " + path.string());
  out << kMetricsHeader << "\n";
  for (const auto& r : rows) out << format_metrics_row(r) << "\n";
}

std::filesystem::path write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = "ckpt-" + std::to_string(ckpt.step);
  const auto tmp = dir / (stem + ".tmp");
  const auto final_path = dir / (stem + ".ckb");
  const std::string bytes = encode_checkpoint(ckpt);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw_error(ErrorCode::kIoError, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, final_path, ec);
  if (ec) throw_error(ErrorCode::kIoError, "rename " + tmp.string() + ": " + ec.message());
  return final_path;
}

Trainer::Trainer(TrainerConfig config, TrainerData data, rpc::BankClient* client)
    : config_(std::move(config)), data_(std::move(data)), client_(client), rng_(config_.seed) {
  validate_spec(config_.spec);
  const size_t n = data_.ids.size();
  if (data_.x.size() != n) throw_error(ErrorCode::kConfigError, "ids and features differ in size");
  if (config_.spec.variant == Variant::kTwoTower && data_.y.size() != n) {
    throw_error(ErrorCode::kConfigError, "two_tower needs a second modality per item");
  }
  if (data_.labels.size() < n) data_.labels.resize(n);
  if (data_.train.empty()) {
    data_.train.resize(n);
    std::iota(data_.train.begin(), data_.train.end(), size_t{0});
  }
  for (const Vector& x : data_.x) {
    if (x.size() != config_.spec.input_dim) {
      throw_error(ErrorCode::kDimensionMismatch, "feature dim does not match input_dim");
    }
  }
  params_ = to_float(init_params(config_.spec, config_.seed));
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.step = step_;
  c.params = params_;
  c.metadata["variant"] = variant_name(config_.spec.variant);
  return c;
}

std::filesystem::path Trainer::save_checkpoint() {
  if (config_.ckpt_dir.empty()) throw_error(ErrorCode::kConfigError, "no checkpoint directory");
  return write_checkpoint(checkpoint(), config_.ckpt_dir);
}

std::vector<size_t> Trainer::sample_batch() {
  std::vector<size_t> pool = data_.train;
  if (config_.batch_size == 0 || config_.batch_size >= pool.size()) return pool;
  for (size_t i = 0; i < config_.batch_size; ++i) {
    std::uniform_int_distribution<size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng_)]);
  }
  pool.resize(config_.batch_size);
  return pool;
}

MetricsRow Trainer::step() {
  const std::vector<size_t> batch = sample_batch();
  return step(batch);
}

MetricsRow Trainer::step(std::span<const size_t> batch) {
  if (batch.empty()) throw_error(ErrorCode::kInvalidArgument, "empty batch");
  last_pushed_.clear();
  MetricsRow row = config_.spec.variant == Variant::kTwoTower ? step_pairs(batch)
                                                              : step_nodes(batch);
  ++step_;
  row.step = step_;
  row.stale_skips = stale_skips_;
  if (config_.ckpt_every > 0 && !config_.ckpt_dir.empty() && step_ % config_.ckpt_every == 0) {
    save_checkpoint();
  }
  return row;
}

std::vector<MetricsRow> Trainer::run(std::ostream* metrics_out) {
  std::vector<MetricsRow> rows;
  if (metrics_out) *metrics_out << kMetricsHeader << "\n";
  while (step_ < config_.steps) {
    rows.push_back(step());
    if (metrics_out) *metrics_out << format_metrics_row(rows.back()) << "\n" << std::flush;
  }
  return rows;
}

std::optional<uint32_t> Trainer::local_label(size_t index) const { return data_.labels[index]; }

Vector Trainer::one_hot(uint32_t label) const {
  Vector v(config_.spec.num_classes, 0.0f);
  v.at(label) = 1.0f;
  return v;
}

void Trainer::push_gradients(const std::map<KnowledgeKey, Vector>& grads) {
  if (!client_ || grads.empty()) return;
  std::vector<rpc::Request> reqs;
  reqs.reserve(grads.size());
  for (const auto& [key, g] : grads) {
    reqs.push_back(rpc::UpdateGradRequest{key, g, static_cast<float>(config_.lr), config_.source});
  }
  try {
    for (const rpc::Response& r : client_->call_batch(reqs)) {
      if (const auto* err = std::get_if<rpc::ErrorResponse>(&r)) {
        throw_error(err->code, err->message);
      }
    }
    last_pushed_ = grads;
  } catch (const Error& e) {
    if (!is_bank_unavailable(e)) throw;
    spdlog::warn("gradient push skipped at step {}: {}", step_, e.what());
  }
}

MetricsRow Trainer::step_nodes(std::span<const size_t> batch) {
  const BankLayout& layout = config_.layout;
  const bool graph_reg = config_.spec.variant == Variant::kGraphReg;
  std::vector<NodeExample> examples(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) examples[i].x = data_.x[batch[i]];

  bool skipped = false;
  std::vector<std::optional<FeatureRecord>> records;
  if (client_) {
    std::vector<KnowledgeKey> keys;
    for (size_t idx : batch) keys.push_back({layout.features_ns, data_.ids[idx]});
    try {
      records = client_->lookup_features(keys);
    } catch (const Error& e) {
      if (!is_bank_unavailable(e)) throw;
      skipped = true;
    }
  }
  const bool have_records = client_ && !skipped;
  for (size_t i = 0; i < batch.size(); ++i) {
    if (have_records) {
      if (records[i] && records[i]->label_dist) examples[i].target = records[i]->label_dist;
    } else if (auto l = local_label(batch[i])) {
      examples[i].target = one_hot(*l);
    }
  }

  // Neighbor embeddings, deduplicated into one lookup.
  double lag_sum = 0.0;
  size_t lag_count = 0;
  std::vector<std::vector<KnowledgeKey>> neighbor_keys(batch.size());
  const bool want_neighbors = have_records && (!graph_reg || config_.spec.lambda > 0.0);
  if (want_neighbors) {
    std::vector<KnowledgeKey> unique;
    std::unordered_map<std::string, size_t> slot;
    for (size_t i = 0; i < batch.size(); ++i) {
      if (!records[i]) continue;
      for (const Neighbor& nb : records[i]->neighbors) {
        if (nb.key.ns != layout.embedding_ns) continue;
        neighbor_keys[i].push_back(nb.key);
        examples[i].neighbors.push_back({{}, nb.weight});
        if (slot.emplace(nb.key.id, unique.size()).second) unique.push_back(nb.key);
      }
    }
    if (!unique.empty()) {
      try {
        const auto entries = client_->lookup(unique);
        for (size_t i = 0; i < batch.size(); ++i) {
          for (size_t j = 0; j < neighbor_keys[i].size(); ++j) {
            const auto& e = entries[slot.at(neighbor_keys[i][j].id)];
            examples[i].neighbors[j].h = e->vector;
            lag_sum += e->version <= step_ ? static_cast<double>(step_ - e->version) : 0.0;
            ++lag_count;
          }
        }
      } catch (const Error& e) {
        if (!is_bank_unavailable(e)) throw;
        skipped = true;
        for (auto& ex : examples) ex.neighbors.clear();
        for (auto& keys : neighbor_keys) keys.clear();
        lag_sum = 0.0;
        lag_count = 0;
      }
    }
  }
  if (skipped) ++stale_skips_;

  const ParamMap p = to_double(params_);
  const LossOutput out = graph_reg ? loss_graph_reg(p, examples, config_.spec.lambda)
                                   : loss_encoder_gnn(p, examples);
  sgd_update(params_, out.grads, config_.lr);
  last_regularizer_ = out.regularizer;

  if (graph_reg && have_records && client_) {
    std::map<KnowledgeKey, Vector> grads;
    auto accumulate = [&grads](const KnowledgeKey& key, const std::vector<double>& g) {
      auto [it, inserted] = grads.try_emplace(key, to_vector(g));
      if (!inserted) {
        for (size_t k = 0; k < g.size(); ++k) {
          it->second[k] = static_cast<float>(double(it->second[k]) + g[k]);
        }
      }
    };
    if (config_.push_own_grads) {
      for (size_t i = 0; i < batch.size(); ++i) {
        accumulate({layout.embedding_ns, data_.ids[batch[i]]}, out.own_grads[i]);
      }
    }
    if (config_.push_neighbor_grads) {
      for (size_t i = 0; i < batch.size(); ++i) {
        for (size_t j = 0; j < neighbor_keys[i].size(); ++j) {
          accumulate(neighbor_keys[i][j], out.neighbor_grads[i][j]);
        }
      }
    }
    push_gradients(grads);
  }

  MetricsRow row;
  row.loss = out.loss;
  row.accuracy = out.labeled ? static_cast<double>(out.correct) / out.labeled : 0.0;
  row.mean_neighbor_version_lag = lag_count ? lag_sum / static_cast<double>(lag_count) : 0.0;
  return row;
}

MetricsRow Trainer::step_pairs(std::span<const size_t> batch) {
  const BankLayout& layout = config_.layout;
  TwoTowerBatch tb;
  const size_t fresh = std::max<size_t>(
      1, static_cast<size_t>(std::ceil(config_.spec.fresh_fraction * batch.size() - 1e-9)));
  tb.pairs.resize(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    tb.pairs[i].x = data_.x[batch[i]];
    tb.pairs[i].y = data_.y[batch[i]];
    tb.pairs[i].fresh = i < fresh || !client_;
  }

  std::vector<size_t> negatives;
  if (client_ && config_.num_negatives > 0) {
    std::set<size_t> in_batch(batch.begin(), batch.end());
    std::vector<size_t> pool;
    for (size_t idx : data_.train) {
      if (!in_batch.count(idx)) pool.push_back(idx);
    }
    const size_t want = std::min<size_t>(config_.num_negatives, pool.size());
    for (size_t i = 0; i < want; ++i) {
      std::uniform_int_distribution<size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng_)]);
    }
    negatives.assign(pool.begin(), pool.begin() + want);
  }

  double lag_sum = 0.0;
  size_t lag_count = 0;
  if (client_) {
    std::vector<size_t> cached;
    for (size_t i = fresh; i < batch.size(); ++i) cached.push_back(batch[i]);
    std::vector<KnowledgeKey> keys_a, keys_b;
    for (size_t idx : cached) {
      keys_a.push_back({layout.tower_a_ns, data_.ids[idx]});
      keys_b.push_back({layout.tower_b_ns, data_.ids[idx]});
    }
    for (size_t idx : negatives) {
      keys_a.push_back({layout.tower_a_ns, data_.ids[idx]});
      keys_b.push_back({layout.tower_b_ns, data_.ids[idx]});
    }
    if (!keys_a.empty()) {
      try {
        const std::vector<rpc::Request> reqs{rpc::LookupEmbRequest{keys_a, true},
                                             rpc::LookupEmbRequest{keys_b, true}};
        auto resps = client_->call_batch(reqs);
        for (const auto& r : resps) {
          if (const auto* err = std::get_if<rpc::ErrorResponse>(&r)) {
            throw_error(err->code, err->message);
          }
        }
        const auto& ea = std::get<rpc::LookupEmbResponse>(resps[0]).entries;
        const auto& eb = std::get<rpc::LookupEmbResponse>(resps[1]).entries;
        for (size_t k = 0; k < ea.size(); ++k) {
          for (const auto* e : {&*ea[k], &*eb[k]}) {
            lag_sum += e->version <= step_ ? static_cast<double>(step_ - e->version) : 0.0;
            ++lag_count;
          }
          if (k < cached.size()) {
            tb.pairs[fresh + k].cached_a = ea[k]->vector;
            tb.pairs[fresh + k].cached_b = eb[k]->vector;
          } else {
            tb.negatives_a.push_back(ea[k]->vector);
            tb.negatives_b.push_back(eb[k]->vector);
          }
        }
      } catch (const Error& e) {
        if (!is_bank_unavailable(e)) throw;
        ++stale_skips_;
        for (auto& p : tb.pairs) p.fresh = true;
        tb.negatives_a.clear();
        tb.negatives_b.clear();
        lag_sum = 0.0;
        lag_count = 0;
      }
    }
  }

  const LossOutput out = loss_two_tower(to_double(params_), tb, config_.spec.temperature);
  sgd_update(params_, out.grads, config_.lr);

  MetricsRow row;
  row.loss = out.loss;
  row.accuracy = out.labeled ? static_cast<double>(out.correct) / out.labeled : 0.0;
  row.mean_neighbor_version_lag = lag_count ? lag_sum / static_cast<double>(lag_count) : 0.0;
  return row;
}

}  // namespace knowbank::trainer
