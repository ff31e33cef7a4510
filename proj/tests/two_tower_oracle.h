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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "knowbank/harness/simulation.h"
#include "knowbank/trainer/model.h"

namespace knowbank::testing {

// Monolithic two-tower trace: same sampling as the trainer, but cached
// embeddings are recomputed in-process from the current parameters, which is
// what a staleness-0 bank must serve.
inline std::vector<double> monolithic_two_tower_losses(const harness::Simulation& sim,
                                                       uint64_t steps) {
  const trainer::TrainerConfig cfg = sim.trainer_config();
  const trainer::TrainerData data = sim.trainer_data();
  std::vector<size_t> train = data.train;
  if (train.empty()) {
    train.resize(data.ids.size());
    std::iota(train.begin(), train.end(), size_t{0});
  }
  auto params = trainer::to_float(trainer::init_params(cfg.spec, cfg.seed));
  std::mt19937_64 rng(cfg.seed);
  auto partial_shuffle = [&](std::vector<size_t>& pool, size_t want) {
    for (size_t i = 0; i < want; ++i) {
      std::uniform_int_distribution<size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(want);
  };

  std::vector<double> losses;
  for (uint64_t t = 0; t < steps; ++t) {
    std::vector<size_t> batch = train;
    if (cfg.batch_size > 0 && cfg.batch_size < batch.size()) partial_shuffle(batch, cfg.batch_size);
    const size_t fresh = std::max<size_t>(
        1, static_cast<size_t>(std::ceil(cfg.spec.fresh_fraction * batch.size() - 1e-9)));
    std::vector<size_t> negatives;
    if (cfg.num_negatives > 0) {
      const std::set<size_t> in_batch(batch.begin(), batch.end());
      for (size_t idx : train) {
        if (!in_batch.count(idx)) negatives.push_back(idx);
      }
      partial_shuffle(negatives, std::min<size_t>(cfg.num_negatives, negatives.size()));
    }

    const trainer::ParamMap p = trainer::to_double(params);
    const auto& wa = trainer::param(p, trainer::kTowerA);
    const auto& wb = trainer::param(p, trainer::kTowerB);
    auto emb_a = [&](size_t i) { return trainer::to_vector(trainer::encode(wa, data.x[i])); };
    auto emb_b = [&](size_t i) { return trainer::to_vector(trainer::encode(wb, data.y[i])); };

    trainer::TwoTowerBatch tb;
    for (size_t i = 0; i < batch.size(); ++i) {
      trainer::PairExample pe;
      pe.x = data.x[batch[i]];
      pe.y = data.y[batch[i]];
      pe.fresh = i < fresh;
      if (!pe.fresh) {
        pe.cached_a = emb_a(batch[i]);
        pe.cached_b = emb_b(batch[i]);
      }
      tb.pairs.push_back(std::move(pe));
    }
    for (size_t idx : negatives) {
      tb.negatives_a.push_back(emb_a(idx));
      tb.negatives_b.push_back(emb_b(idx));
    }
    const auto out = trainer::loss_two_tower(p, tb, cfg.spec.temperature);
    trainer::sgd_update(params, out.grads, cfg.lr);
    losses.push_back(out.loss);
  }
  return losses;
}

}  // namespace knowbank::testing
