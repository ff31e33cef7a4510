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

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "knowbank/bank/knowledge_bank.h"
#include "knowbank/rpc/handler.h"
#include "knowbank/rpc/protocol.h"

namespace boost::asio {
class thread_pool;
}

namespace knowbank::rpc {

struct ServerOptions {
  std::string host = "127.0.0.1";
  uint16_t port = 0;  // 0 picks an ephemeral port
  size_t workers = 4;
  size_t max_frame = kDefaultMaxFrame;
  // Runs tick_expiry_wall() on this period when nonzero.
  uint32_t tick_period_ms = 0;
};

// TCP front end for a KnowledgeBank. One reader thread per connection decodes
// frames and hands them to a worker pool, so responses on a connection may
// complete out of order.
class BankServer {
 public:
  BankServer(KnowledgeBank& bank, ServerOptions options);
  ~BankServer();

  BankServer(const BankServer&) = delete;
  BankServer& operator=(const BankServer&) = delete;

  // Binds and starts accepting. Throws kIoError when the endpoint is unusable.
  void start();
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

  uint16_t port() const { return port_; }
  uint64_t frames_received() const { return frames_received_.load(); }
  uint64_t responses_sent() const { return responses_sent_.load(); }

 private:
  struct Connection;

  void accept_loop();
  void read_loop(std::shared_ptr<Connection> conn);
  void send(Connection& conn, const std::string& frame);
  void tick_loop();

  KnowledgeBank& bank_;
  RequestHandler handler_;
  ServerOptions options_;
  int listen_fd_ = -1;
  uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<uint64_t> frames_received_{0};
  std::atomic<uint64_t> responses_sent_{0};

  std::unique_ptr<boost::asio::thread_pool> pool_;
  std::thread accept_thread_;
  std::thread tick_thread_;
  std::mutex mu_;
  std::condition_variable stopped_cv_;
  std::list<std::shared_ptr<Connection>> connections_;
  std::list<std::thread> readers_;
};

}  // namespace knowbank::rpc
