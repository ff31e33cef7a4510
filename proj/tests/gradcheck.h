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

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "knowbank/trainer/model.h"

namespace gradcheck {

namespace kt = knowbank::trainer;

struct Report {
  double worst_rel = 0.0;
  std::string worst_param;
};

// Central differences with step h on every parameter entry. The error per
// matrix is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8), both in
// Frobenius norm.
inline Report check(const kt::ParamMap& params, const kt::ParamMap& analytic,
                    const std::function<double(const kt::ParamMap&)>& loss, double h = 1e-3) {
  Report rep;
  kt::ParamMap p = params;
  for (auto& [name, m] : p) {
    const auto& an = analytic.at(name);
    double diff2 = 0.0, an2 = 0.0, num2 = 0.0;
    for (size_t i = 0; i < m.data.size(); ++i) {
      const double orig = m.data[i];
      m.data[i] = orig + h;
      const double up_x = m.data[i];
      const double up = loss(p);
      m.data[i] = orig - h;
      const double dn_x = m.data[i];
      const double dn = loss(p);
      m.data[i] = orig;
      const double num = (up - dn) / (up_x - dn_x);
      diff2 += (num - an.data[i]) * (num - an.data[i]);
      an2 += an.data[i] * an.data[i];
      num2 += num * num;
    }
    const double denom = std::max({std::sqrt(an2), std::sqrt(num2), 1e-8});
    const double rel = std::sqrt(diff2) / denom;
    if (rel > rep.worst_rel) {
      rep.worst_rel = rel;
      rep.worst_param = name;
    }
  }
  return rep;
}

inline knowbank::Vector rand_vec(std::mt19937_64& rng, size_t n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  knowbank::Vector v(n);
  for (float& x : v) x = static_cast<float>(nd(rng));
  return v;
}

inline knowbank::Vector rand_dist(std::mt19937_64& rng, size_t c) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> w(c);
  double s = 0;
  for (double& x : w) s += (x = u(rng));
  knowbank::Vector out(c);
  float total = 0;
  for (size_t i = 0; i + 1 < c; ++i) total += (out[i] = static_cast<float>(w[i] / s));
  out[c - 1] = 1.0f - total;
  return out;
}

struct NodeInstance {
  kt::ModelSpec spec;
  kt::ParamMap params;
  std::vector<kt::NodeExample> batch;
};

inline NodeInstance random_nodes(std::mt19937_64& rng, kt::Variant variant) {
  NodeInstance inst;
  inst.spec.variant = variant;
  inst.spec.input_dim = 2 + rng() % 4;
  inst.spec.hidden_dim = 2 + rng() % 4;
  inst.spec.num_classes = 2 + rng() % 3;
  inst.spec.init_scale = 0.8;
  inst.params = kt::init_params(inst.spec, rng());
  const size_t n = 3;
  inst.batch.resize(n);
  for (size_t i = 0; i < n; ++i) {
    auto& ex = inst.batch[i];
    ex.x = rand_vec(rng, inst.spec.input_dim);
    if (i == 0 || rng() % 3) ex.target = rand_dist(rng, inst.spec.num_classes);
    const size_t nn = rng() % 4;
    for (size_t j = 0; j < nn; ++j) {
      ex.neighbors.push_back({rand_vec(rng, inst.spec.hidden_dim, 0.5),
                              static_cast<float>(0.1 + (rng() % 100) / 50.0)});
    }
  }
  return inst;
}

struct PairInstance {
  kt::ModelSpec spec;
  kt::ParamMap params;
  kt::TwoTowerBatch batch;
};

inline PairInstance random_pairs(std::mt19937_64& rng, size_t pairs = 2, size_t negatives = 3) {
  PairInstance inst;
  inst.spec.variant = kt::Variant::kTwoTower;
  inst.spec.input_dim = 2 + rng() % 4;
  inst.spec.input_dim_b = 2 + rng() % 4;
  inst.spec.hidden_dim = 2 + rng() % 4;
  inst.spec.temperature = 0.2 + (rng() % 100) / 100.0;
  inst.spec.init_scale = 0.8;
  inst.params = kt::init_params(inst.spec, rng());
  for (size_t i = 0; i < pairs; ++i) {
    kt::PairExample p;
    p.x = rand_vec(rng, inst.spec.input_dim);
    p.y = rand_vec(rng, inst.spec.input_dim_b);
    p.fresh = i == 0 || rng() % 2;
    if (!p.fresh) {
      p.cached_a = rand_vec(rng, inst.spec.hidden_dim, 0.5);
      p.cached_b = rand_vec(rng, inst.spec.hidden_dim, 0.5);
    }
    inst.batch.pairs.push_back(p);
  }
  for (size_t i = 0; i < negatives; ++i) {
    inst.batch.negatives_a.push_back(rand_vec(rng, inst.spec.hidden_dim, 0.5));
    inst.batch.negatives_b.push_back(rand_vec(rng, inst.spec.hidden_dim, 0.5));
  }
  return inst;
}

}  // namespace gradcheck
