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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "knowbank/core/codec.h"
#include "knowbank/core/error.h"
#include "knowbank/core/hash.h"
#include "knowbank/maker/maker.h"
#include "knowbank/rpc/server.h"
#include "knowbank/trainer/model.h"
#include "knowbank/trainer/trainer.h"
#include "oracles.h"

namespace kb = knowbank;
namespace km = knowbank::maker;
namespace rpc = knowbank::rpc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

kb::Matrix mat(uint32_t r, uint32_t c, std::vector<float> data) {
  kb::Matrix m(r, c);
  m.data = std::move(data);
  return m;
}

kb::Matrix identity(uint32_t n) {
  kb::Matrix m(n, n);
  for (uint32_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

kb::Checkpoint ckpt(uint64_t step, std::map<std::string, kb::Matrix> params) {
  kb::Checkpoint c;
  c.step = step;
  c.params = std::move(params);
  return c;
}

std::vector<kb::NamespaceConfig> spaces(uint32_t dim) {
  std::vector<kb::NamespaceConfig> out;
  for (const char* n : {"node_emb", "labeled_emb"}) {
    kb::NamespaceConfig e;
    e.name = n;
    e.dim = dim;
    e.flush_expiry_ticks = 0;
    out.push_back(e);
  }
  kb::NamespaceConfig f;
  f.name = "features";
  f.kind = kb::NamespaceKind::kFeatures;
  out.push_back(f);
  return out;
}

std::optional<kb::EmbeddingEntry> peek(kb::KnowledgeBank& bank, const kb::KnowledgeKey& key) {
  const std::vector<kb::KnowledgeKey> keys{key};
  return bank.lookup_embeddings(keys, false)[0];
}

std::optional<kb::FeatureRecord> feat(kb::KnowledgeBank& bank, const kb::KnowledgeKey& key) {
  const std::vector<kb::KnowledgeKey> keys{key};
  return bank.lookup_features(keys)[0];
}

struct Fixture {
  kb::KnowledgeBank bank;
  rpc::BankClient client;
  explicit Fixture(uint32_t dim, uint32_t shards = 1)
      : bank(spaces(dim), {shards, true}),
        client(std::make_unique<rpc::LoopbackChannel>(bank)) {}
};

std::vector<km::Item> random_items(std::mt19937_64& rng, size_t n, uint32_t dim) {
  std::normal_distribution<float> nd;
  std::vector<km::Item> items;
  for (size_t i = 0; i < n; ++i) {
    km::Item it{"i" + std::to_string(i), kb::Vector(dim), std::nullopt};
    for (float& v : it.features) v = nd(rng);
    items.push_back(std::move(it));
  }
  return items;
}

// Fails reads while armed, otherwise behaves like the loopback transport.
class FlakyChannel : public rpc::Channel {
 public:
  FlakyChannel(kb::KnowledgeBank& bank, int* failures) : inner_(bank), failures_(failures) {}
  void write(std::string_view bytes) override { inner_.write(bytes); }
  rpc::RawFrame read_frame(std::chrono::steady_clock::time_point deadline) override {
    if (*failures_ > 0) {
      --*failures_;
      kb::throw_error(kb::ErrorCode::kTimeout, "injected");
    }
    return inner_.read_frame(deadline);
  }
  void close() override { inner_.close(); }

 private:
  rpc::LoopbackChannel inner_;
  int* failures_;
};

}  // namespace

TEST_CASE("base64 matches published vectors") {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"", ""},         {"f", "Zg=="},         {"fo", "Zm8="},        {"foo", "Zm9v"},
      {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"}};
  for (const auto& [raw, enc] : cases) {
    CHECK(km::base64_encode(raw) == enc);
    CHECK(km::base64_decode(enc) == raw);
  }
  CHECK_THROWS_AS(km::base64_decode("abc"), kb::Error);
  CHECK_THROWS_AS(km::base64_decode("a*c="), kb::Error);
}

TEST_CASE("item lines round trip") {
  std::mt19937_64 rng(1);
  auto items = random_items(rng, 20, 5);
  items[3].label = 2;
  items[7].label = 0;
  items[9].features.clear();
  for (const auto& it : items) CHECK(km::parse_item(km::format_item(it)) == it);
  CHECK(km::format_item({"a", {1.0f}, 3}) == "a\tAQAAAAAAgD8=\t3");

  TempDir dir("knowbank_items");
  km::write_items(dir.path / "items.tsv", items);
  CHECK(km::read_items(dir.path / "items.tsv") == items);

  CHECK_THROWS_AS(km::parse_item("no-tab"), kb::Error);
  CHECK_THROWS_AS(km::parse_item("a\tAQAAAAAAgD8=\tx"), kb::Error);
  CHECK_THROWS_AS(km::parse_item("a\tAQAA"), kb::Error);
  CHECK_THROWS_AS(km::read_items(dir.path / "missing.tsv"), kb::Error);
}

TEST_CASE("checkpoint discovery") {
  TempDir dir("knowbank_poll");
  CHECK_FALSE(km::latest_checkpoint(dir.path).has_value());

  const auto w = identity(2);
  kb::trainer::write_checkpoint(ckpt(3, {{"encoder/W", w}}), dir.path);
  kb::trainer::write_checkpoint(ckpt(7, {{"encoder/W", w}}), dir.path);
  CHECK(km::latest_checkpoint(dir.path)->step == 7);

  {
    std::ofstream tmp(dir.path / "ckpt-9.tmp", std::ios::binary);
    tmp << kb::encode_checkpoint(ckpt(9, {{"encoder/W", w}}));
  }
  CHECK(km::latest_checkpoint(dir.path)->step == 7);

  km::CheckpointPoller poller(dir.path);
  CHECK(poller.poll());
  CHECK(poller.current()->step == 7);
  CHECK_FALSE(poller.poll());

  { std::ofstream bad(dir.path / "ckpt-11.ckb", std::ios::binary); bad << "garbage"; }
  CHECK_FALSE(poller.poll());
  CHECK(poller.current()->step == 7);

  kb::trainer::write_checkpoint(ckpt(12, {{"encoder/W", w}}), dir.path);
  CHECK(poller.poll());
  CHECK(poller.current()->step == 12);

  // A restarted trainer writing lower steps does not move the maker back.
  fs::remove(dir.path / "ckpt-12.ckb");
  kb::trainer::write_checkpoint(ckpt(5, {{"encoder/W", w}}), dir.path);
  CHECK_FALSE(poller.poll());
  CHECK(poller.current()->step == 12);

  CHECK(km::checkpoint_step("ckpt-42.ckb") == 42u);
  CHECK_FALSE(km::checkpoint_step("ckpt-.ckb").has_value());
  CHECK_FALSE(km::checkpoint_step("ckpt-4x.ckb").has_value());

  fs::remove_all(dir.path);
  CHECK_THROWS_AS(poller.poll(), kb::Error);
}

TEST_CASE("embed_refresh writes the encoder output tagged with the step") {
  Fixture f(3);
  std::mt19937_64 rng(2);
  auto items = random_items(rng, 6, 3);
  km::TaskOptions opt;
  CHECK(km::embed_refresh(ckpt(4, {{"encoder/W", identity(3)}}), items, f.client, opt) == 6);
  for (const auto& it : items) {
    auto e = peek(f.bank, {"node_emb", it.id});
    REQUIRE(e);
    CHECK(e->version == 4);
    for (size_t k = 0; k < 3; ++k) CHECK(e->vector[k] == static_cast<float>(std::tanh(double(it.features[k]))));
  }

  kb::Matrix half = identity(3);
  for (float& v : half.data) v *= 0.5f;
  km::embed_refresh(ckpt(9, {{"encoder/W", half}}), items, f.client, opt);
  CHECK(peek(f.bank, {"node_emb", items[0].id})->version == 9);
  // An older checkpoint never lowers the stored version.
  CHECK(km::embed_refresh(ckpt(6, {{"encoder/W", identity(3)}}), items, f.client, opt) == 0);
  CHECK(peek(f.bank, {"node_emb", items[0].id})->version == 9);

  opt.param = "tower_a/W";
  CHECK_THROWS_AS(km::embed_refresh(ckpt(10, {{"encoder/W", identity(3)}}), items, f.client, opt),
                  kb::Error);
}

TEST_CASE("maker and trainer encoders agree across the wire") {
  kb::KnowledgeBank bank(spaces(4), {4, true});
  rpc::BankServer server(bank, {});
  server.start();
  auto client = rpc::BankClient::connect("127.0.0.1:" + std::to_string(server.port()));
  kb::trainer::ModelSpec spec{kb::trainer::Variant::kGraphReg, 6, 0, 4, 3};
  const auto params = kb::trainer::init_params(spec, 17);
  const auto ck = ckpt(1, kb::trainer::to_float(params));
  std::mt19937_64 rng(3);
  const auto items = random_items(rng, 40, 6);
  km::embed_refresh(ck, items, client, {});
  const auto w = kb::trainer::param(params, kb::trainer::kEncoderW);
  for (const auto& it : items) {
    const auto h = kb::trainer::encode(w, it.features);
    const auto e = client.peek({{"node_emb", it.id}})[0];
    REQUIRE(e);
    for (size_t k = 0; k < h.size(); ++k) CHECK(std::abs(e->vector[k] - h[k]) <= 1e-6);
  }
  server.stop();
}

TEST_CASE("label_mine thresholds the posterior") {
  // One input, one hidden unit, two classes: p0 = sigmoid(2 v tanh(10)).
  auto make = [](double p0) {
    const double v = std::log(p0 / (1 - p0)) / (2 * std::tanh(10.0));
    return ckpt(2, {{"encoder/W", mat(1, 1, {10.0f})},
                    {"classifier/V", mat(2, 1, {float(v), float(-v)})}});
  };
  const std::vector<km::Item> items{{"a", {1.0f}, std::nullopt}};
  CHECK(km::posterior(make(0.99), items[0].features)[0] == doctest::Approx(0.99).epsilon(1e-6));

  Fixture f(1);
  kb::FeatureRecord start;
  start.label_dist = kb::Vector{0, 1};
  start.label_source = kb::LabelSource::kObserved;
  start.neighbors.push_back({{"node_emb", "b"}, 0.5f});
  f.bank.set_features({"features", "a"}, start);

  km::TaskOptions opt;
  opt.tau = 0.9;
  CHECK(km::label_mine(make(0.55), items, f.client, opt) == 0);
  CHECK(*feat(f.bank, {"features", "a"}) == start);

  CHECK(km::label_mine(make(0.99), items, f.client, opt) == 1);
  const auto rec = *feat(f.bank, {"features", "a"});
  CHECK(rec.label_dist == kb::Vector{1, 0});
  CHECK(rec.label_source == kb::LabelSource::kMined);
  CHECK(rec.neighbors == start.neighbors);

  CHECK_THROWS_AS(km::label_mine(ckpt(1, {{"encoder/W", mat(1, 1, {1.0f})}}), items, f.client, opt),
                  kb::Error);
}

TEST_CASE("graph_agree weights neighbor labels by similarity") {
  Fixture f(2);
  const auto ck = ckpt(1, {{"encoder/W", identity(2)}});
  const std::vector<km::Item> q{{"u", {1.0f, 0.0f}, std::nullopt}};
  auto label = [&](const std::string& id, kb::Vector v, uint32_t cls) {
    f.bank.set_embedding({"labeled_emb", id}, std::move(v), 1);
    kb::FeatureRecord r;
    r.label_dist = kb::Vector(2, 0.0f);
    (*r.label_dist)[cls] = 1.0f;
    r.label_source = kb::LabelSource::kObserved;
    f.bank.set_features({"features", id}, r);
  };
  km::TaskOptions opt;

  SUBCASE("single neighbor is copied") {
    label("a", {0.3f, 0.2f}, 1);
    opt.k = 1;
    CHECK(km::graph_agree(ck, q, f.client, opt) == 1);
    const auto r = *feat(f.bank, {"features", "u"});
    CHECK(r.label_dist == kb::Vector{0, 1});
    CHECK(r.label_source == kb::LabelSource::kInferred);
  }
  SUBCASE("scores are normalized") {
    label("a", {0.9f, std::sqrt(1 - 0.81f)}, 0);
    label("b", {0.1f, std::sqrt(1 - 0.01f)}, 1);
    opt.k = 2;
    km::graph_agree(ck, q, f.client, opt);
    const auto r = *feat(f.bank, {"features", "u"});
    CHECK((*r.label_dist)[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK((*r.label_dist)[1] == doctest::Approx(0.1).epsilon(1e-6));
  }
  SUBCASE("non-positive scores are skipped") {
    label("a", {-1.0f, 0.0f}, 0);
    label("b", {0.0f, 1.0f}, 1);
    opt.k = 2;
    CHECK(km::graph_agree(ck, q, f.client, opt) == 0);
    CHECK_FALSE(feat(f.bank, {"features", "u"}).has_value());
  }
  SUBCASE("observed labels stay") {
    label("a", {1.0f, 0.0f}, 1);
    label("u", {0.0f, 1.0f}, 0);
    CHECK(km::graph_agree(ck, q, f.client, opt) == 0);
    CHECK(feat(f.bank, {"features", "u"})->label_dist == kb::Vector{1, 0});
  }
}

TEST_CASE("graph_agree with k=1 equals a 1-NN label copy") {
  std::mt19937_64 rng(8);
  for (int inst = 0; inst < 10; ++inst) {
    Fixture f(3, 1 + rng() % 4);
    const auto ck = ckpt(1, {{"encoder/W", identity(3)}});
    auto labeled = random_items(rng, 15, 3);
    std::vector<std::pair<std::string, std::vector<float>>> store;
    std::map<std::string, uint32_t> truth;
    for (auto& it : labeled) {
      it.id = "L" + it.id;
      const auto h = kb::trainer::to_vector(kb::trainer::encode(kb::trainer::to_double({{"w", identity(3)}}).at("w"), it.features));
      f.bank.set_embedding({"labeled_emb", it.id}, h, 1);
      store.emplace_back(it.id, h);
      truth[it.id] = rng() % 3;
      kb::FeatureRecord r;
      r.label_dist = kb::Vector(3, 0.0f);
      (*r.label_dist)[truth[it.id]] = 1.0f;
      r.label_source = kb::LabelSource::kObserved;
      f.bank.set_features({"features", it.id}, r);
    }
    const auto queries = random_items(rng, 10, 3);
    km::TaskOptions opt;
    opt.k = 1;
    km::graph_agree(ck, queries, f.client, opt);
    for (const auto& q : queries) {
      const auto h = kb::trainer::to_vector(kb::trainer::encode(kb::trainer::to_double({{"w", identity(3)}}).at("w"), q.features));
      const auto nn = oracle::brute_knn(store, h, 1, true);
      const auto rec = feat(f.bank, {"features", q.id});
      if (nn[0].second <= 0) {
        CHECK_FALSE(rec.has_value());
        continue;
      }
      kb::Vector expect(3, 0.0f);
      expect[truth[nn[0].first]] = 1.0f;
      REQUIRE(rec);
      CHECK(rec->label_dist == expect);
    }
  }
}

TEST_CASE("graph_build links nearest embeddings") {
  SUBCASE("duplicates and filtering") {
    Fixture f(2);
    f.bank.set_embedding({"node_emb", "a"}, kb::Vector{1.0f, 1.0f}, 0);
    f.bank.set_embedding({"node_emb", "b"}, kb::Vector{1.0f, 1.0f}, 0);
    f.bank.set_embedding({"node_emb", "c"}, kb::Vector{1.0f, -1.0f}, 0);
    std::vector<km::Item> items{{"a", {}, {}}, {"b", {}, {}}, {"c", {}, {}}, {"missing", {}, {}}};
    km::TaskOptions opt;
    opt.k = 1;
    CHECK(km::graph_build(items, f.client, opt) == 3);
    const auto ra = *feat(f.bank, {"features", "a"});
    REQUIRE(ra.neighbors.size() == 1);
    CHECK(ra.neighbors[0] == kb::Neighbor{{"node_emb", "b"}, 1.0f});
    CHECK(feat(f.bank, {"features", "b"})->neighbors[0].key.id == "a");
    CHECK_FALSE(peek(f.bank, {"node_emb", "missing"}).has_value());
    CHECK_FALSE(feat(f.bank, {"features", "missing"}).has_value());

    opt.sigma_min = 0.99;
    km::graph_build({items.data() + 2, 1}, f.client, opt);
    CHECK(feat(f.bank, {"features", "c"})->neighbors.empty());
  }
  SUBCASE("matches a brute-force graph") {
    std::mt19937_64 rng(9);
    for (int inst = 0; inst < 10; ++inst) {
      Fixture f(4, 1 + rng() % 8);
      auto items = random_items(rng, 30, 4);
      std::vector<std::pair<std::string, std::vector<float>>> store;
      for (const auto& it : items) {
        f.bank.set_embedding({"node_emb", it.id}, it.features, 0);
        store.emplace_back(it.id, it.features);
      }
      km::TaskOptions opt;
      opt.k = 1 + rng() % 5;
      opt.sigma_min = 0.1;
      km::graph_build(items, f.client, opt);
      for (const auto& it : items) {
        std::vector<kb::Neighbor> expect;
        for (const auto& [id, s] : oracle::brute_knn(store, it.features, store.size(), true)) {
          if (id == it.id || s < opt.sigma_min || expect.size() == opt.k) continue;
          expect.push_back({{"node_emb", id}, float(s)});
        }
        CHECK(feat(f.bank, {"features", it.id})->neighbors == expect);
      }
    }
  }
}

TEST_CASE("maker loop") {
  TempDir dir("knowbank_maker_loop");
  std::mt19937_64 rng(4);
  auto items = random_items(rng, 25, 3);
  km::MakerConfig cfg;
  cfg.checkpoint_dir = dir.path;
  cfg.batch_size = 10;
  cfg.poll_interval = std::chrono::milliseconds(1);

  SUBCASE("idles without a checkpoint") {
    Fixture f(3);
    km::Maker m(cfg, items, f.client);
    for (int i = 0; i < 3; ++i) CHECK(m.step() == km::Maker::Status::kIdle);
    CHECK(m.state().items_processed == 0);
    CHECK_FALSE(m.state().loaded);
  }
  SUBCASE("one pass per checkpoint") {
    Fixture f(3);
    km::Maker m(cfg, items, f.client);
    kb::trainer::write_checkpoint(ckpt(2, {{"encoder/W", identity(3)}}), dir.path);
    int processed = 0;
    while (m.step() == km::Maker::Status::kProcessed) ++processed;
    CHECK(processed == 3);
    CHECK(m.state().items_processed == 25);
    CHECK(m.state().loaded_step == 2);

    kb::Matrix w = identity(3);
    w(0, 1) = 0.5f;
    kb::trainer::write_checkpoint(ckpt(5, {{"encoder/W", w}}), dir.path);
    CHECK(m.step() == km::Maker::Status::kProcessed);
    CHECK(m.state().loaded_step == 5);
    // The batch after the new checkpoint already uses it.
    CHECK(peek(f.bank, {"node_emb", items[0].id})->version == 5);
    CHECK(peek(f.bank, {"node_emb", items[10].id})->version == 2);
    while (m.step() == km::Maker::Status::kProcessed) {
    }
    CHECK(m.state().items_processed == 50);
  }
  SUBCASE("restart mid-stream matches a clean run") {
    kb::trainer::write_checkpoint(ckpt(3, {{"encoder/W", identity(3)}}), dir.path);
    cfg.task = km::Task::kEmbedRefresh;
    Fixture clean(3, 4);
    {
      km::Maker m(cfg, items, clean.client);
      while (m.step() != km::Maker::Status::kIdle) {
      }
    }
    Fixture crashed(3, 4);
    {
      km::Maker m(cfg, items, crashed.client);
      m.step();
      m.step();
    }
    {
      km::Maker m(cfg, items, crashed.client);
      while (m.step() != km::Maker::Status::kIdle) {
      }
    }
    CHECK(crashed.bank.contents() == clean.bank.contents());
  }
  SUBCASE("timeouts back off and retry the batch") {
    kb::trainer::write_checkpoint(ckpt(1, {{"encoder/W", identity(3)}}), dir.path);
    kb::KnowledgeBank bank(spaces(3), {});
    int failures = 4;
    rpc::BankClient client(std::make_unique<FlakyChannel>(bank, &failures));
    cfg.initial_backoff = std::chrono::milliseconds(1);
    cfg.max_backoff = std::chrono::milliseconds(4);
    km::Maker m(cfg, items, client);
    std::vector<long> waits;
    while (m.step() == km::Maker::Status::kRetry) waits.push_back(m.backoff().count());
    CHECK(waits == std::vector<long>{1, 2, 4, 4});
    CHECK(m.state().last_error.has_value());
    CHECK(m.backoff().count() == 0);
    while (m.step() == km::Maker::Status::kProcessed) {
    }
    CHECK(m.state().items_processed == 25);
    for (const auto& it : items) CHECK(peek(bank, {"node_emb", it.id}).has_value());
  }
  SUBCASE("partitions split the stream") {
    kb::trainer::write_checkpoint(ckpt(1, {{"encoder/W", identity(3)}}), dir.path);
    Fixture f(3);
    uint64_t total = 0;
    for (uint32_t p = 0; p < 3; ++p) {
      cfg.partition = p;
      cfg.partitions = 3;
      km::Maker m(cfg, items, f.client);
      while (m.step() == km::Maker::Status::kProcessed) {
      }
      total += m.state().items_processed;
    }
    CHECK(total == 25);
    for (const auto& it : items) CHECK(peek(f.bank, {"node_emb", it.id}).has_value());
  }
  SUBCASE("config validation") {
    Fixture f(3);
    auto bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(km::Maker(bad, items, f.client), kb::Error);
    bad = cfg;
    bad.options.tau = 1.0;
    CHECK_THROWS_AS(km::Maker(bad, items, f.client), kb::Error);
    bad = cfg;
    bad.poll_interval = std::chrono::milliseconds(0);
    CHECK_THROWS_AS(km::Maker(bad, items, f.client), kb::Error);
    CHECK_THROWS_AS(km::parse_task("nope"), kb::Error);
    CHECK(km::parse_task("graph_build") == km::Task::kGraphBuild);
  }
}
