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
#include "knowbank/rpc/server.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <boost/asio/post.hpp>
#include <boost/asio/thread_pool.hpp>
#include <cerrno>
#include <chrono>
#include <cstring>

#include <spdlog/spdlog.h>

#include "knowbank/core/error.h"

namespace knowbank::rpc {

struct BankServer::Connection {
  int fd = -1;
  std::mutex write_mu;
  std::atomic<bool> open{true};
};

namespace {

// Reads exactly n bytes. False on EOF or error.
bool read_full(int fd, char* buf, size_t n) {
  size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) return false;
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    got += static_cast<size_t>(r);
  }
  return true;
}

bool write_full(int fd, const char* buf, size_t n) {
  size_t sent = 0;
  while (sent < n) {
    const ssize_t r = ::send(fd, buf + sent, n - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<size_t>(r);
  }
  return true;
}

int64_t steady_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

BankServer::BankServer(KnowledgeBank& bank, ServerOptions options)
    : bank_(bank), handler_(bank), options_(std::move(options)) {}

BankServer::~BankServer() { stop(); }

void BankServer::start() {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(options_.port);
  if (::getaddrinfo(options_.host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
    throw_error(ErrorCode::kIoError, "cannot resolve " + options_.host);
  }
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  const int rc = ::bind(listen_fd_, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0 || ::listen(listen_fd_, 128) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw_error(ErrorCode::kIoError, "cannot listen on " + options_.host + ":" + port + ": " + why);
  }
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);

  pool_ = std::make_unique<boost::asio::thread_pool>(std::max<size_t>(1, options_.workers));
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  if (options_.tick_period_ms > 0) tick_thread_ = std::thread([this] { tick_loop(); });
  spdlog::info("bank server listening on {}:{}", options_.host, port_);
}

void BankServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (accept_thread_.joinable()) accept_thread_.join();
  if (tick_thread_.joinable()) tick_thread_.join();
  {
    std::lock_guard lock(mu_);
    for (auto& conn : connections_) {
      std::lock_guard conn_lock(conn->write_mu);
      if (conn->fd >= 0) ::shutdown(conn->fd, SHUT_RDWR);
    }
  }
  for (auto& t : readers_) t.join();
  readers_.clear();
  pool_->join();
  {
    std::lock_guard lock(mu_);
    connections_.clear();
  }
  stopped_cv_.notify_all();
  spdlog::info("bank server stopped");
}

void BankServer::wait() {
  std::unique_lock lock(mu_);
  stopped_cv_.wait(lock, [this] { return !running_.load(); });
}

void BankServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, 100);
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    std::lock_guard lock(mu_);
    if (!running_) {
      ::close(fd);
      break;
    }
    connections_.push_back(conn);
    readers_.emplace_back([this, conn] { read_loop(conn); });
  }
}

void BankServer::send(Connection& conn, const std::string& frame) {
  std::lock_guard lock(conn.write_mu);
  if (!conn.open) return;
  if (write_full(conn.fd, frame.data(), frame.size())) {
    responses_sent_.fetch_add(1);
  } else {
    conn.open = false;
  }
}

void BankServer::read_loop(std::shared_ptr<Connection> conn) {
  std::string header_bytes(kHeaderSize, '\0');
  std::string payload;
  while (running_ && conn->open) {
    if (!read_full(conn->fd, header_bytes.data(), kHeaderSize)) break;
    const FrameHeader h = parse_header(header_bytes);
    frames_received_.fetch_add(1);
    if (h.payload_len > options_.max_frame - kHeaderSize) {
      send(*conn, response_frame(h.request_id,
                                 ErrorResponse{ErrorCode::kMalformedPayload, "frame too large"}));
      break;
    }
    payload.resize(h.payload_len);
    if (!read_full(conn->fd, payload.data(), payload.size())) break;
    try {
      validate_header(h);
    } catch (const Error& e) {
      send(*conn, response_frame(h.request_id, ErrorResponse{e.code(), e.detail()}));
      continue;
    }
    const auto type = static_cast<MsgType>(h.type);
    if (type == MsgType::kError) {
      send(*conn, response_frame(h.request_id, ErrorResponse{ErrorCode::kMalformedPayload,
                                                             "Error is not a request type"}));
      continue;
    }
    boost::asio::post(*pool_, [this, conn, type, id = h.request_id, body = payload] {
      const Response resp = handler_.handle_payload(type, body);
      send(*conn, response_frame(id, resp));
    });
  }
  std::lock_guard lock(conn->write_mu);
  conn->open = false;
  ::close(conn->fd);
  conn->fd = -1;
}

void BankServer::tick_loop() {
  auto next = std::chrono::steady_clock::now();
  while (running_) {
    next += std::chrono::milliseconds(options_.tick_period_ms);
    while (running_ && std::chrono::steady_clock::now() < next) {
      std::this_thread::sleep_for(std::chrono::milliseconds(std::min<uint32_t>(20, options_.tick_period_ms)));
    }
    if (!running_) break;
    bank_.tick_expiry_wall(steady_ms());
  }
}

}  // namespace knowbank::rpc
