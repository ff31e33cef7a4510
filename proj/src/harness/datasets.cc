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
#include "knowbank/harness/datasets.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

#include "knowbank/core/error.h"
#include "knowbank/maker/items.h"

namespace knowbank::harness {

namespace fs = std::filesystem;

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw_error(ErrorCode::kInvalidArgument, msg);
}

// Random class centers with zero mean across classes, each scaled to norm.
std::vector<Vector> make_centers(std::mt19937_64& rng, uint32_t classes, uint32_t dims,
                                 double norm) {
  std::normal_distribution<double> nd;
  std::vector<std::vector<double>> raw(classes, std::vector<double>(dims));
  std::vector<double> mean(dims, 0.0);
  for (auto& c : raw) {
    for (uint32_t k = 0; k < dims; ++k) {
      c[k] = nd(rng);
      mean[k] += c[k] / classes;
    }
  }
  std::vector<Vector> centers(classes, Vector(dims));
  for (uint32_t c = 0; c < classes; ++c) {
    double s = 0.0;
    if (classes > 1) {
      for (uint32_t k = 0; k < dims; ++k) {
        raw[c][k] -= mean[k];
        s += raw[c][k] * raw[c][k];
      }
    } else {
      for (double v : raw[c]) s += v * v;
    }
    const double scale = s > 0.0 ? norm / std::sqrt(s) : 0.0;
    for (uint32_t k = 0; k < dims; ++k) centers[c][k] = static_cast<float>(raw[c][k] * scale);
  }
  return centers;
}

Vector sample_point(std::mt19937_64& rng, const Vector& center) {
  std::normal_distribution<float> nd;
  Vector x(center.size());
  for (size_t k = 0; k < x.size(); ++k) x[k] = center[k] + nd(rng);
  return x;
}

// Marks round(fraction * count) of the given items as labeled.
std::vector<bool> pick_labeled(std::mt19937_64& rng, size_t count, double fraction) {
  std::vector<size_t> order(count);
  std::iota(order.begin(), order.end(), size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const size_t m = static_cast<size_t>(std::llround(fraction * static_cast<double>(count)));
  std::vector<bool> out(count, false);
  for (size_t i = 0; i < std::min(m, count); ++i) out[order[i]] = true;
  return out;
}

}  // namespace

SyntheticDataset gen_blobs(const BlobParams& p) {
  require(p.noise >= 0.0 && p.noise < 1.0, "noise must lie in [0, 1)");
  require(p.classes >= 1 && p.dims >= 1, "classes and dims must be positive");
  require(p.labeled_fraction >= 0.0 && p.labeled_fraction <= 1.0, "labeled_fraction in [0, 1]");
  std::mt19937_64 rng(p.seed);
  SyntheticDataset ds;
  ds.classes = p.classes;
  const auto centers = make_centers(rng, p.classes, p.dims, p.separation);
  std::uniform_int_distribution<uint32_t> cls(0, p.classes - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (uint32_t i = 0; i < p.n + p.test_n; ++i) {
    DataItem it;
    const bool test = i >= p.n;
    it.id = (test ? "t" : "n") + std::to_string(test ? i - p.n : i);
    it.truth = cls(rng);
    it.x = sample_point(rng, centers[it.truth]);
    it.split = test ? Split::kTest : Split::kTrain;
    if (!test) {
      uint32_t obs = it.truth;
      if (p.classes > 1 && u01(rng) < p.noise) {
        std::uniform_int_distribution<uint32_t> off(1, p.classes - 1);
        obs = (it.truth + off(rng)) % p.classes;
      }
      it.observed = obs;
    }
    ds.items.push_back(std::move(it));
  }
  const auto labeled = pick_labeled(rng, p.n, p.labeled_fraction);
  for (uint32_t i = 0; i < p.n; ++i) {
    if (!labeled[i]) ds.items[i].observed.reset();
  }
  return ds;
}

SyntheticDataset gen_sbm(const SbmParams& p) {
  require(p.p_out >= 0.0 && p.p_out < p.p_in && p.p_in <= 1.0, "need 0 <= p_out < p_in <= 1");
  require(p.classes >= 1 && p.n >= p.classes, "need n >= classes >= 1");
  std::mt19937_64 rng(p.seed);
  SyntheticDataset ds;
  ds.classes = p.classes;
  std::vector<uint32_t> truth(p.n);
  for (uint32_t i = 0; i < p.n; ++i) truth[i] = i % p.classes;
  std::shuffle(truth.begin(), truth.end(), rng);
  const auto centers = make_centers(rng, p.classes, p.dims, p.separation);
  for (uint32_t i = 0; i < p.n; ++i) {
    DataItem it;
    it.id = "n" + std::to_string(i);
    it.truth = truth[i];
    it.observed = truth[i];
    it.x = sample_point(rng, centers[truth[i]]);
    ds.items.push_back(std::move(it));
  }
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (uint32_t a = 0; a < p.n; ++a) {
    for (uint32_t b = a + 1; b < p.n; ++b) {
      const double q = truth[a] == truth[b] ? p.p_in : p.p_out;
      if (u01(rng) < q) ds.edges.push_back({a, b, 1.0f});
    }
  }
  const auto labeled = pick_labeled(rng, p.n, p.labeled_fraction);
  for (uint32_t i = 0; i < p.n; ++i) {
    if (!labeled[i]) ds.items[i].observed.reset();
  }
  return ds;
}

SyntheticDataset gen_pairs(const PairParams& p) {
  require(p.latent_dim >= 1 && p.dims_a >= 1 && p.dims_b >= 1, "dims must be positive");
  require(p.noise >= 0.0, "noise must be non-negative");
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> nd;
  auto projection = [&](uint32_t rows) {
    std::vector<double> m(static_cast<size_t>(rows) * p.latent_dim);
    const double s = 1.0 / std::sqrt(static_cast<double>(p.latent_dim));
    for (double& v : m) v = nd(rng) * s;
    return m;
  };
  const auto a = projection(p.dims_a);
  const auto b = projection(p.dims_b);
  auto view = [&](const std::vector<double>& m, uint32_t rows, const std::vector<double>& z) {
    Vector out(rows);
    for (uint32_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (uint32_t c = 0; c < p.latent_dim; ++c) s += m[static_cast<size_t>(r) * p.latent_dim + c] * z[c];
      out[r] = static_cast<float>(s + p.noise * nd(rng));
    }
    return out;
  };
  SyntheticDataset ds;
  for (uint32_t i = 0; i < p.n + p.test_n; ++i) {
    std::vector<double> z(p.latent_dim);
    for (double& v : z) v = nd(rng);
    DataItem it;
    const bool test = i >= p.n;
    it.id = (test ? "t" : "p") + std::to_string(test ? i - p.n : i);
    it.x = view(a, p.dims_a, z);
    it.y = view(b, p.dims_b, z);
    it.split = test ? Split::kTest : Split::kTrain;
    ds.items.push_back(std::move(it));
  }
  return ds;
}

void save_dataset(const SyntheticDataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<maker::Item> train, train_b, test;
  for (const auto& it : ds.items) {
    auto& dst = it.split == Split::kTrain ? train : test;
    dst.push_back({it.id, it.x, it.split == Split::kTrain ? it.observed : std::optional(it.truth)});
    if (!it.y.empty() && it.split == Split::kTrain) train_b.push_back({it.id, it.y, std::nullopt});
  }
  maker::write_items(dir / "items.tsv", train);
  maker::write_items(dir / "test.tsv", test);
  if (!train_b.empty()) maker::write_items(dir / "items_b.tsv", train_b);
  {
    std::ofstream out(dir / "truth.tsv", std::ios::trunc);
    for (const auto& it : ds.items) out << it.id << '\t' << it.truth << '\n';
  }
  {
    std::ofstream out(dir / "edges.tsv", std::ios::trunc);
    for (const auto& e : ds.edges) out << e.a << '\t' << e.b << '\t' << e.weight << '\n';
  }
  std::vector<maker::Item> test_b;
  for (const auto& it : ds.items) {
    if (!it.y.empty() && it.split == Split::kTest) test_b.push_back({it.id, it.y, std::nullopt});
  }
  if (!test_b.empty()) maker::write_items(dir / "test_b.tsv", test_b);
  nlohmann::json meta = {{"classes", ds.classes}, {"items", ds.items.size()}};
  std::ofstream(dir / "meta.json", std::ios::trunc) << meta.dump(2) << '\n';
  if (!fs::exists(dir / "meta.json")) throw_error(ErrorCode::kIoError, "cannot write dataset");
}

SyntheticDataset load_dataset(const fs::path& dir) {
  SyntheticDataset ds;
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw_error(ErrorCode::kIoError, "missing meta.json in " + dir.string());
  ds.classes = nlohmann::json::parse(meta_in).at("classes").get<uint32_t>();

  std::map<std::string, uint32_t> truth;
  {
    std::ifstream in(dir / "truth.tsv");
    std::string id;
    uint32_t t = 0;
    while (in >> id >> t) truth[id] = t;
  }
  auto add = [&](const fs::path& file, Split split) {
    if (!fs::exists(file)) return;
    for (auto& it : maker::read_items(file)) {
      DataItem d;
      d.id = it.id;
      d.x = std::move(it.features);
      d.split = split;
      if (split == Split::kTrain) d.observed = it.label;
      auto t = truth.find(d.id);
      if (t != truth.end()) d.truth = t->second;
      ds.items.push_back(std::move(d));
    }
  };
  add(dir / "items.tsv", Split::kTrain);
  add(dir / "test.tsv", Split::kTest);
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < ds.items.size(); ++i) index[ds.items[i].id] = i;
  for (const char* name : {"items_b.tsv", "test_b.tsv"}) {
    if (!fs::exists(dir / name)) continue;
    for (auto& it : maker::read_items(dir / name)) {
      auto f = index.find(it.id);
      if (f == index.end()) throw_error(ErrorCode::kMalformedRecord, "unknown pair id " + it.id);
      ds.items[f->second].y = std::move(it.features);
    }
  }
  std::ifstream edges(dir / "edges.tsv");
  Edge e;
  while (edges >> e.a >> e.b >> e.weight) ds.edges.push_back(e);
  return ds;
}

}  // namespace knowbank::harness
