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
#include <filesystem>
#include <limits>
#include <random>
#include <thread>

#include "doctest.h"
#include "knowbank/bank/knowledge_bank.h"
#include "knowbank/core/error.h"
#include "oracles.h"

namespace kb = knowbank;

namespace {

kb::NamespaceConfig emb_ns(const std::string& name, uint32_t dim, uint64_t expiry = 0) {
  kb::NamespaceConfig c;
  c.name = name;
  c.kind = kb::NamespaceKind::kEmbeddings;
  c.dim = dim;
  c.flush_expiry_ticks = expiry;
  return c;
}

kb::NamespaceConfig feat_ns(const std::string& name) {
  kb::NamespaceConfig c;
  c.name = name;
  c.kind = kb::NamespaceKind::kFeatures;
  return c;
}

kb::KnowledgeKey key(const std::string& id, const std::string& ns = "emb") { return {ns, id}; }

kb::EmbeddingEntry lookup1(kb::KnowledgeBank& bank, const kb::KnowledgeKey& k) {
  std::vector<kb::KnowledgeKey> keys{k};
  return *bank.lookup_embeddings(keys)[0];
}

kb::ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const kb::Error& e) {
    return e.code();
  }
  return kb::ErrorCode::kUnknown;
}

}  // namespace

TEST_CASE("set and lookup") {
  kb::KnowledgeBank bank({emb_ns("emb", 2)}, {});
  const kb::Vector v{0.25f, -3.5f};
  bank.set_embedding(key("a"), v, 9);
  CHECK(lookup1(bank, key("a")).vector == v);
  bank.set_embedding(key("a"), v, 5);
  CHECK(lookup1(bank, key("a")).version == 9);

  bank.update_gradient(key("a"), kb::Vector{1, 1}, 0.5f, "t0");
  bank.set_embedding(key("a"), v, 10);
  CHECK(bank.pending_count(key("a")) == 0);
  CHECK(lookup1(bank, key("a")).vector == v);

  CHECK(code_of([&] { bank.set_embedding(key("a"), kb::Vector{1}, 0); }) ==
        kb::ErrorCode::kDimensionMismatch);
  CHECK(code_of([&] { bank.set_embedding(key("a", "nope"), v, 0); }) ==
        kb::ErrorCode::kUnknownNamespace);
}

TEST_CASE("default creation") {
  kb::NamespaceConfig u = emb_ns("uni", 4);
  u.init = kb::InitKind::kUniform;
  u.init_scale = 0.1f;
  u.init_seed = 42;
  kb::KnowledgeBank bank({emb_ns("emb", 3), u}, {});
  const auto e = lookup1(bank, key("x"));
  CHECK(e.vector == kb::Vector{0, 0, 0});
  CHECK(e.version == 0);
  CHECK(lookup1(bank, key("x")) == e);

  const auto a = lookup1(bank, key("q", "uni"));
  kb::KnowledgeBank other({u}, {4, true});
  CHECK(lookup1(other, key("q", "uni")).vector == a.vector);
  for (float x : a.vector) {
    CHECK(x >= -0.1f);
    CHECK(x < 0.1f);
  }
  CHECK(lookup1(bank, key("r", "uni")).vector != a.vector);

  std::vector<kb::KnowledgeKey> keys{key("absent")};
  CHECK_FALSE(bank.lookup_embeddings(keys, false)[0].has_value());
  CHECK(bank.stats()[0].entries == 3);
}

TEST_CASE("flush arithmetic") {
  kb::KnowledgeBank bank({emb_ns("emb", 2)}, {});
  bank.set_embedding(key("a"), kb::Vector{0, 0}, 0);
  bank.update_gradient(key("a"), kb::Vector{1, 0}, 0.1f, "t");
  const auto r = lookup1(bank, key("a"));
  CHECK(r.vector[0] == doctest::Approx(-0.1));
  CHECK(r.vector[1] == 0.0f);

  bank.set_embedding(key("b"), kb::Vector{5, 5}, 0);
  for (float x : {1.0f, 1.0f, 100.0f}) bank.update_gradient(key("b"), kb::Vector{x, 0}, 1.0f, "t");
  const auto f = bank.flush_key(key("b"));
  REQUIRE(f.has_value());
  CHECK(f->consumed == 3);
  CHECK(f->discarded == 1);
  CHECK(f->applied == kb::Vector{1, 0});
  CHECK(lookup1(bank, key("b")).vector == kb::Vector{4, 5});

  const uint64_t before = lookup1(bank, key("b")).ltime;
  CHECK_FALSE(bank.flush_key(key("b")).has_value());
  CHECK(lookup1(bank, key("b")).ltime == before);

  bank.set_embedding(key("c"), kb::Vector{1, 1}, 0);
  bank.update_gradient(key("c"), kb::Vector{1, 0}, 1.0f, "t0");
  bank.update_gradient(key("c"), kb::Vector{0, 1}, 1.0f, "t1");
  CHECK(lookup1(bank, key("c")).vector == kb::Vector{0.5f, 0.5f});

  bank.set_embedding(key("z"), kb::Vector{1, 1}, 0);
  for (int i = 0; i < 3; ++i) bank.update_gradient(key("z"), kb::Vector{0, 0}, 1.0f, "t");
  bank.update_gradient(key("z"), kb::Vector{2, 0}, 1.0f, "t");
  CHECK(lookup1(bank, key("z")).vector == kb::Vector{0.5f, 1});
}

TEST_CASE("gradient validation") {
  kb::KnowledgeBank bank({emb_ns("emb", 2)}, {});
  const float nan = std::numeric_limits<float>::quiet_NaN();
  CHECK(code_of([&] { bank.update_gradient(key("a"), kb::Vector{nan, 0}, 1.0f, "t"); }) ==
        kb::ErrorCode::kNonFinite);
  CHECK(code_of([&] { bank.update_gradient(key("a"), kb::Vector{1}, 1.0f, "t"); }) ==
        kb::ErrorCode::kDimensionMismatch);
  CHECK(code_of([&] { bank.update_gradient(key("a"), kb::Vector{1, 1}, 0.0f, "t"); }) ==
        kb::ErrorCode::kInvalidArgument);
  CHECK(bank.pending_count(key("a")) == 0);
}

TEST_CASE("tick expiry") {
  kb::KnowledgeBank bank({emb_ns("emb", 1, 5)}, {});
  bank.set_embedding(key("a"), kb::Vector{1}, 0);
  bank.update_gradient(key("a"), kb::Vector{1}, 1.0f, "t");
  // Delta stamped t = 1, clock now 2. Ticks raise the clock to 3, 4, 5, 6.
  CHECK(bank.stats()[0].clock == 2);
  CHECK(bank.tick_expiry() == 0);
  CHECK(bank.tick_expiry() == 0);
  CHECK(bank.tick_expiry() == 0);
  CHECK(bank.pending_count(key("a")) == 1);
  CHECK(bank.tick_expiry() == 1);
  CHECK(bank.pending_count(key("a")) == 0);

  kb::KnowledgeBank zero({emb_ns("emb", 1, 0)}, {});
  zero.update_gradient(key("a"), kb::Vector{1}, 1.0f, "t");
  CHECK(zero.tick_expiry() == 1);

  kb::KnowledgeBank never({emb_ns("emb", 1, std::numeric_limits<uint64_t>::max())}, {});
  never.set_embedding(key("a"), kb::Vector{1}, 0);
  never.update_gradient(key("a"), kb::Vector{1}, 1.0f, "t");
  for (int i = 0; i < 1000; ++i) CHECK(never.tick_expiry() == 0);
  CHECK(never.contents().embeddings.at(key("a")).first == kb::Vector{1});
}

TEST_CASE("wall clock expiry") {
  kb::NamespaceConfig c = emb_ns("emb", 1);
  c.flush_expiry_ms = 50;
  kb::KnowledgeBank bank({c}, {});
  bank.update_gradient(key("a"), kb::Vector{1}, 1.0f, "t");
  CHECK(bank.tick_expiry_wall(0) == 0);
  CHECK(bank.tick_expiry_wall(std::numeric_limits<int64_t>::max() / 2) == 1);
}

TEST_CASE("features") {
  kb::KnowledgeBank bank({feat_ns("feat"), emb_ns("emb", 2)}, {});
  kb::FeatureRecord rec;
  rec.neighbors.push_back({key("b"), 1.0f});
  bank.set_features(key("a", "feat"), rec);
  std::vector<kb::KnowledgeKey> keys{key("a", "feat"), key("missing", "feat")};
  const auto out = bank.lookup_features(keys);
  CHECK(out[0] == rec);
  CHECK_FALSE(out[1].has_value());
  rec.label_dist = kb::Vector{0.5f, 0.6f};
  CHECK(code_of([&] { bank.set_features(key("a", "feat"), rec); }) ==
        kb::ErrorCode::kMalformedRecord);
  std::vector<kb::KnowledgeKey> bad{key("a", "nope")};
  CHECK(code_of([&] { bank.lookup_features(bad); }) == kb::ErrorCode::kUnknownNamespace);
}

TEST_CASE("knn examples") {
  kb::KnowledgeBank bank({emb_ns("emb", 2)}, {});
  bank.set_embedding(key("a"), kb::Vector{1, 0}, 0);
  auto one = bank.knn_search("emb", kb::Vector{1, 0}, 1, kb::Metric::kCosine);
  REQUIRE(one.size() == 1);
  CHECK(one[0].key == key("a"));
  CHECK(one[0].score == doctest::Approx(1.0));

  bank.set_embedding(key("b"), kb::Vector{0, 1}, 0);
  bank.set_embedding(key("c"), kb::Vector{0.7f, 0.7f}, 0);
  auto two = bank.knn_search("emb", kb::Vector{1, 0}, 2, kb::Metric::kCosine);
  REQUIRE(two.size() == 2);
  CHECK(two[0].key == key("a"));
  CHECK(two[1].key == key("c"));
  CHECK(two[1].score == doctest::Approx(0.70710678).epsilon(1e-6));

  auto all = bank.knn_search("emb", kb::Vector{1, 0}, 10, kb::Metric::kNegL2);
  REQUIRE(all.size() == 3);
  CHECK(all[0].key == key("a"));
  CHECK(all[1].key == key("c"));
  CHECK(all[2].key == key("b"));
  CHECK(code_of([&] { bank.knn_search("emb", kb::Vector{1}, 1, kb::Metric::kCosine); }) ==
        kb::ErrorCode::kDimensionMismatch);
  CHECK(code_of([&] { bank.knn_search("x", kb::Vector{1, 0}, 1, kb::Metric::kCosine); }) ==
        kb::ErrorCode::kUnknownNamespace);
}

TEST_CASE("knn ties break by key") {
  kb::KnowledgeBank bank({emb_ns("emb", 1)}, {4, true});
  for (const char* id : {"d", "b", "a", "c"}) bank.set_embedding(key(id), kb::Vector{1}, 0);
  auto hits = bank.knn_search("emb", kb::Vector{1}, 3, kb::Metric::kCosine);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].key.id == "a");
  CHECK(hits[1].key.id == "b");
  CHECK(hits[2].key.id == "c");
}

TEST_CASE("knn matches brute force for every shard count") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const uint32_t dim = 1 + rng() % 8;
    const size_t n = 1 + rng() % 100;
    std::vector<std::pair<std::string, std::vector<float>>> store;
    std::normal_distribution<float> nd;
    for (size_t i = 0; i < n; ++i) {
      std::vector<float> v(dim);
      for (float& x : v) x = std::round(nd(rng) * 4) / 4;
      store.emplace_back("k" + std::to_string(i), v);
    }
    std::vector<float> q(dim);
    for (float& x : q) x = nd(rng);
    const size_t k = 1 + rng() % 20;
    for (uint32_t shards : {1u, 2u, 4u, 8u}) {
      kb::KnowledgeBank bank({emb_ns("emb", dim)}, {shards, true});
      for (const auto& [id, v] : store) bank.set_embedding(key(id), v, 0);
      for (bool cos : {true, false}) {
        auto hits = bank.knn_search("emb", q, k, cos ? kb::Metric::kCosine : kb::Metric::kNegL2);
        auto ref = oracle::brute_knn(store, q, k, cos);
        REQUIRE(hits.size() == ref.size());
        for (size_t i = 0; i < ref.size(); ++i) {
          CHECK(hits[i].key.id == ref[i].first);
          CHECK(hits[i].score == ref[i].second);
        }
      }
    }
  }
}

TEST_CASE("lazy flush matches scalar replay") {
  std::mt19937_64 rng(99);
  std::normal_distribution<float> nd;
  for (int trial = 0; trial < 300; ++trial) {
    const uint32_t dim = 1 + rng() % 8;
    kb::KnowledgeBank bank({emb_ns("emb", dim, 1u << 30)}, {});
    oracle::LazyKey ref;
    ref.value.assign(dim, 0.0);
    const int ops = 1 + rng() % 12;
    for (int i = 0; i < ops; ++i) {
      std::vector<float> g(dim);
      for (float& x : g) x = nd(rng) * ((rng() % 5 == 0) ? 50.0f : 1.0f);
      bank.update_gradient(key("a"), g, 0.1f, "t");
      ref.update(g, 0.1f);
    }
    ref.flush();
    const auto got = lookup1(bank, key("a"));
    for (uint32_t d = 0; d < dim; ++d) {
      CHECK(got.vector[d] == doctest::Approx(ref.value[d]).epsilon(1e-5));
    }
  }
}

TEST_CASE("synchronous equivalence with zero expiry") {
  kb::KnowledgeBank bank({emb_ns("emb", 3, 0)}, {});
  std::mt19937_64 rng(1);
  std::normal_distribution<float> nd;
  kb::Vector local{0.3f, -0.2f, 0.1f};
  bank.set_embedding(key("a"), local, 0);
  for (int step = 0; step < 200; ++step) {
    kb::Vector g(3);
    for (float& x : g) x = nd(rng);
    bank.update_gradient(key("a"), g, 0.05f, "t");
    bank.tick_expiry();
    for (int d = 0; d < 3; ++d) local[d] = static_cast<float>(double(local[d]) - double(0.05f * g[d]));
    const auto got = bank.contents().embeddings.at(key("a")).first;
    for (int d = 0; d < 3; ++d) CHECK(std::abs(got[d] - local[d]) <= 1e-6);
  }
}

TEST_CASE("ltime increases on every mutation") {
  kb::KnowledgeBank bank({emb_ns("emb", 1, 1u << 30)}, {});
  uint64_t last = lookup1(bank, key("a")).ltime;
  for (int i = 0; i < 20; ++i) {
    if (i % 2) {
      bank.set_embedding(key("a"), kb::Vector{float(i)}, i);
    } else {
      bank.update_gradient(key("a"), kb::Vector{1}, 1.0f, "t");
    }
    const uint64_t now = lookup1(bank, key("a")).ltime;
    CHECK(now > last);
    last = now;
  }
}

TEST_CASE("stats") {
  kb::KnowledgeBank bank({emb_ns("emb", 1), feat_ns("feat")}, {4, true});
  for (const auto& s : bank.stats()) CHECK(s == kb::ShardStats{});
  bank.set_embedding(key("a"), kb::Vector{1}, 0);
  int nonzero = 0;
  for (const auto& s : bank.stats()) nonzero += s.entries == 1;
  CHECK(nonzero == 1);

  auto prev = bank.stats();
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const std::string id = "k" + std::to_string(rng() % 30);
    switch (rng() % 4) {
      case 0: bank.set_embedding(key(id), kb::Vector{1}, i); break;
      case 1: bank.update_gradient(key(id), kb::Vector{1}, 1.0f, "t"); break;
      case 2: lookup1(bank, key(id)); break;
      default: bank.set_features(key(id, "feat"), {}); break;
    }
    auto now = bank.stats();
    for (size_t s = 0; s < now.size(); ++s) {
      CHECK(now[s].entries >= prev[s].entries);
      CHECK(now[s].clock >= prev[s].clock);
      CHECK(now[s].bytes >= prev[s].bytes);
    }
    prev = now;
  }
}

TEST_CASE("shard transparency") {
  auto run = [](uint32_t shards) {
    kb::KnowledgeBank bank({emb_ns("emb", 2, 0), feat_ns("feat")}, {shards, true});
    std::mt19937_64 rng(8);
    std::normal_distribution<float> nd;
    std::vector<std::string> trace;
    for (int i = 0; i < 400; ++i) {
      const std::string id = "k" + std::to_string(rng() % 40);
      const kb::Vector v{nd(rng), nd(rng)};
      switch (rng() % 5) {
        case 0: bank.set_embedding(key(id), v, i); break;
        case 1: bank.update_gradient(key(id), v, 0.1f, "t"); break;
        case 2: {
          auto e = lookup1(bank, key(id));
          trace.push_back(std::to_string(e.vector[0]) + "," + std::to_string(e.version));
          break;
        }
        case 3: {
          for (const auto& h : bank.knn_search("emb", v, 5, kb::Metric::kCosine)) {
            trace.push_back(h.key.id + ":" + std::to_string(h.score));
          }
          break;
        }
        default: bank.tick_expiry(); break;
      }
    }
    return std::make_pair(trace, bank.contents());
  };
  const auto base = run(1);
  for (uint32_t s : {2u, 4u, 8u}) {
    const auto other = run(s);
    CHECK(other.first == base.first);
    CHECK(other.second == base.second);
  }
}

TEST_CASE("no lost updates under concurrency") {
  kb::KnowledgeBank bank({emb_ns("emb", 2, 1u << 30)}, {4, true});
  bank.set_embedding(key("hot"), kb::Vector{0, 0}, 0);
  constexpr int kThreads = 8;
  constexpr int kPerThread = 250;
  std::vector<std::thread> threads;
  for (int t = 0; t < kThreads; ++t) {
    threads.emplace_back([&bank, t] {
      for (int i = 0; i < kPerThread; ++i) {
        bank.update_gradient(key("hot"), kb::Vector{1, 1}, 1.0f, "t" + std::to_string(t));
        bank.update_gradient(key("k" + std::to_string(t)), kb::Vector{1, 1}, 1.0f, "t");
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(bank.pending_count(key("hot")) == kThreads * kPerThread);
  const auto f = bank.flush_key(key("hot"));
  REQUIRE(f.has_value());
  CHECK(f->consumed == kThreads * kPerThread);
  CHECK(lookup1(bank, key("hot")).vector == kb::Vector{-1, -1});
}

TEST_CASE("snapshot round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "knowbank_snapshot_test";
  std::filesystem::remove_all(dir);
  kb::KnowledgeBank bank({emb_ns("emb", 2, 7), feat_ns("feat")}, {3, true});
  for (int i = 0; i < 30; ++i) {
    bank.set_embedding(key("k" + std::to_string(i)), kb::Vector{float(i), 1}, i);
    kb::FeatureRecord rec;
    rec.label_dist = kb::Vector{1, 0};
    rec.label_source = kb::LabelSource::kObserved;
    bank.set_features(key("k" + std::to_string(i), "feat"), rec);
  }
  bank.update_gradient(key("k3"), kb::Vector{1, 1}, 1.0f, "t");
  bank.save_snapshot(dir);
  auto loaded = kb::KnowledgeBank::load_snapshot(dir, {});
  CHECK(loaded->num_shards() == 3);
  CHECK(loaded->contents() == bank.contents());
  CHECK(loaded->stats() == bank.stats());
  CHECK(loaded->pending_count(key("k3")) == 1);
  CHECK(loaded->namespaces() == bank.namespaces());
  CHECK(lookup1(*loaded, key("k3")).vector == lookup1(bank, key("k3")).vector);
  std::filesystem::remove_all(dir);
}
