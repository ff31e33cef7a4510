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

#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "knowbank/bank/knowledge_bank.h"
#include "knowbank/rpc/handler.h"
#include "knowbank/rpc/protocol.h"

namespace knowbank::rpc {

struct RawFrame {
  FrameHeader header;
  std::string payload;
};

// Ordered byte stream carrying whole frames.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void write(std::string_view bytes) = 0;
  // Throws kTimeout when no complete frame arrives before the deadline and
  // kConnectionLost when the peer is gone.
  virtual RawFrame read_frame(std::chrono::steady_clock::time_point deadline) = 0;
  virtual void close() = 0;
};

class TcpChannel : public Channel {
 public:
  // endpoint is "host:port".
  static std::unique_ptr<TcpChannel> connect(const std::string& endpoint,
                                             std::chrono::milliseconds timeout);
  ~TcpChannel() override;

  void write(std::string_view bytes) override;
  RawFrame read_frame(std::chrono::steady_clock::time_point deadline) override;
  void close() override;

 private:
  explicit TcpChannel(int fd) : fd_(fd) {}
  void fill(size_t want, std::chrono::steady_clock::time_point deadline);

  int fd_ = -1;
  std::string buf_;
};

// In-process transport: each written frame is decoded and served by the
// handler synchronously, so responses are queued in request order.
class LoopbackChannel : public Channel {
 public:
  explicit LoopbackChannel(KnowledgeBank& bank) : handler_(bank) {}

  void write(std::string_view bytes) override;
  RawFrame read_frame(std::chrono::steady_clock::time_point deadline) override;
  void close() override { closed_ = true; }

 private:
  RequestHandler handler_;
  std::string pending_;
  std::deque<RawFrame> responses_;
  bool closed_ = false;
};

struct ClientOptions {
  std::chrono::milliseconds timeout{5000};
};

std::pair<std::string, uint16_t> parse_endpoint(const std::string& endpoint);

// Request/response client over one channel. Use from one thread at a time.
class BankClient {
 public:
  explicit BankClient(std::unique_ptr<Channel> channel, ClientOptions options = {});
  static BankClient connect(const std::string& endpoint, ClientOptions options = {});

  BankClient(BankClient&&) noexcept = default;
  BankClient& operator=(BankClient&&) noexcept = default;

  // At most once: a timed-out request is never resent and a late reply to it
  // is dropped.
  Response call(const Request& req);
  // Pipelines all requests, then returns responses in request order.
  std::vector<Response> call_batch(std::span<const Request> reqs);

  // Typed helpers. Remote ErrorResponse becomes Error with the remote code.
  std::vector<std::optional<EmbeddingEntry>> lookup(std::vector<KnowledgeKey> keys);
  std::vector<std::optional<EmbeddingEntry>> peek(std::vector<KnowledgeKey> keys);
  void set_embedding(const KnowledgeKey& key, Vector vector, uint64_t version);
  void update_gradient(const KnowledgeKey& key, Vector gradient, float learning_rate,
                       const std::string& source);
  std::vector<std::optional<FeatureRecord>> lookup_features(std::vector<KnowledgeKey> keys);
  void set_features(const KnowledgeKey& key, FeatureRecord record);
  std::vector<KnnHit> knn(const std::string& ns, Vector query, uint32_t k, Metric metric);
  std::vector<ShardStats> stats();
  uint64_t tick();
  void close();

  const ClientOptions& options() const { return options_; }
  void set_timeout(std::chrono::milliseconds t) { options_.timeout = t; }

 private:
  template <class T>
  T expect(Response resp);

  std::unique_ptr<Channel> channel_;
  ClientOptions options_;
  uint64_t next_id_ = 1;
};

}  // namespace knowbank::rpc
