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
#include "knowbank/rpc/client.h"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fcntl.h>

#include "knowbank/core/error.h"

namespace knowbank::rpc {

namespace {

int remaining_ms(std::chrono::steady_clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      deadline - std::chrono::steady_clock::now());
  return static_cast<int>(std::max<int64_t>(0, left.count()));
}

}  // namespace

std::pair<std::string, uint16_t> parse_endpoint(const std::string& endpoint) {
  const size_t colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon + 1 == endpoint.size()) {
    throw_error(ErrorCode::kConfigError, "endpoint must be host:port, got '" + endpoint + "'");
  }
  int port = 0;
  try {
    port = std::stoi(endpoint.substr(colon + 1));
  } catch (const std::exception&) {
    port = -1;
  }
  if (port <= 0 || port > 65535) {
    throw_error(ErrorCode::kConfigError, "bad port in '" + endpoint + "'");
  }
  std::string host = endpoint.substr(0, colon);
  if (host.empty()) host = "127.0.0.1";
  return {host, static_cast<uint16_t>(port)};
}

std::unique_ptr<TcpChannel> TcpChannel::connect(const std::string& endpoint,
                                                std::chrono::milliseconds timeout) {
  const auto [host, port] = parse_endpoint(endpoint);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 ||
      res == nullptr) {
    throw_error(ErrorCode::kConnectionLost, "cannot resolve " + host);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0 && errno == EINPROGRESS) {
    pollfd p{fd, POLLOUT, 0};
    rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc == 0) {
      ::close(fd);
      throw_error(ErrorCode::kTimeout, "connect to " + endpoint + " timed out");
    }
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
    rc = err == 0 ? 0 : -1;
    errno = err;
  }
  if (rc != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd);
    throw_error(ErrorCode::kConnectionLost, "connect to " + endpoint + ": " + why);
  }
  ::fcntl(fd, F_SETFL, flags);
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return std::unique_ptr<TcpChannel>(new TcpChannel(fd));
}

TcpChannel::~TcpChannel() { close(); }

void TcpChannel::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void TcpChannel::write(std::string_view bytes) {
  if (fd_ < 0) throw_error(ErrorCode::kConnectionLost, "channel closed");
  size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t r = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw_error(ErrorCode::kConnectionLost, std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<size_t>(r);
  }
}

void TcpChannel::fill(size_t want, std::chrono::steady_clock::time_point deadline) {
  char chunk[65536];
  while (buf_.size() < want) {
    if (fd_ < 0) throw_error(ErrorCode::kConnectionLost, "channel closed");
    pollfd p{fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, remaining_ms(deadline));
    if (ready < 0 && errno == EINTR) continue;
    if (ready == 0) throw_error(ErrorCode::kTimeout, "no response before deadline");
    const ssize_t r = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (r == 0) throw_error(ErrorCode::kConnectionLost, "server closed the connection");
    if (r < 0) {
      if (errno == EINTR) continue;
      throw_error(ErrorCode::kConnectionLost, std::string("recv: ") + std::strerror(errno));
    }
    buf_.append(chunk, static_cast<size_t>(r));
  }
}

RawFrame TcpChannel::read_frame(std::chrono::steady_clock::time_point deadline) {
  fill(kHeaderSize, deadline);
  RawFrame f;
  f.header = parse_header(std::string_view(buf_).substr(0, kHeaderSize));
  validate_header(f.header);
  fill(kHeaderSize + f.header.payload_len, deadline);
  f.payload = buf_.substr(kHeaderSize, f.header.payload_len);
  buf_.erase(0, kHeaderSize + f.header.payload_len);
  return f;
}

void LoopbackChannel::write(std::string_view bytes) {
  if (closed_) throw_error(ErrorCode::kConnectionLost, "channel closed");
  pending_.append(bytes);
  while (pending_.size() >= kHeaderSize) {
    const FrameHeader h = parse_header(std::string_view(pending_).substr(0, kHeaderSize));
    if (pending_.size() < kHeaderSize + h.payload_len) break;
    const std::string_view payload = std::string_view(pending_).substr(kHeaderSize, h.payload_len);
    Response resp;
    try {
      validate_header(h);
      resp = handler_.handle_payload(static_cast<MsgType>(h.type), payload);
    } catch (const Error& e) {
      resp = ErrorResponse{e.code(), e.detail()};
    }
    RawFrame out;
    out.header.type = static_cast<uint8_t>(response_type(resp));
    out.header.request_id = h.request_id;
    out.payload = encode_response(resp);
    out.header.payload_len = static_cast<uint32_t>(out.payload.size());
    responses_.push_back(std::move(out));
    pending_.erase(0, kHeaderSize + h.payload_len);
  }
}

RawFrame LoopbackChannel::read_frame(std::chrono::steady_clock::time_point) {
  if (closed_) throw_error(ErrorCode::kConnectionLost, "channel closed");
  if (responses_.empty()) throw_error(ErrorCode::kTimeout, "no response queued");
  RawFrame f = std::move(responses_.front());
  responses_.pop_front();
  return f;
}

BankClient::BankClient(std::unique_ptr<Channel> channel, ClientOptions options)
    : channel_(std::move(channel)), options_(options) {}

BankClient BankClient::connect(const std::string& endpoint, ClientOptions options) {
  return BankClient(TcpChannel::connect(endpoint, options.timeout), options);
}

Response BankClient::call(const Request& req) {
  return std::move(call_batch(std::span<const Request>(&req, 1)).front());
}

std::vector<Response> BankClient::call_batch(std::span<const Request> reqs) {
  if (!channel_) throw_error(ErrorCode::kConnectionLost, "client closed");
  const uint64_t first = next_id_;
  std::string out;
  for (const Request& r : reqs) out += request_frame(next_id_++, r);
  channel_->write(out);

  std::vector<std::optional<Response>> slots(reqs.size());
  size_t filled = 0;
  const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
  while (filled < reqs.size()) {
    RawFrame f = channel_->read_frame(deadline);
    const uint64_t id = f.header.request_id;
    if (id < first || id >= first + reqs.size()) continue;  // late reply to an abandoned call
    auto& slot = slots[id - first];
    if (slot) continue;
    slot = decode_response(static_cast<MsgType>(f.header.type), f.payload);
    ++filled;
  }
  std::vector<Response> result;
  result.reserve(slots.size());
  for (auto& s : slots) result.push_back(std::move(*s));
  return result;
}

template <class T>
T BankClient::expect(Response resp) {
  if (auto* err = std::get_if<ErrorResponse>(&resp)) throw_error(err->code, err->message);
  if (auto* ok = std::get_if<T>(&resp)) return std::move(*ok);
  throw_error(ErrorCode::kMalformedPayload, "response type does not match request");
}

std::vector<std::optional<EmbeddingEntry>> BankClient::lookup(std::vector<KnowledgeKey> keys) {
  return expect<LookupEmbResponse>(call(LookupEmbRequest{std::move(keys), true})).entries;
}

std::vector<std::optional<EmbeddingEntry>> BankClient::peek(std::vector<KnowledgeKey> keys) {
  return expect<LookupEmbResponse>(call(LookupEmbRequest{std::move(keys), false})).entries;
}

void BankClient::set_embedding(const KnowledgeKey& key, Vector vector, uint64_t version) {
  expect<AckResponse>(call(SetEmbRequest{key, std::move(vector), version}));
}

void BankClient::update_gradient(const KnowledgeKey& key, Vector gradient, float learning_rate,
                                 const std::string& source) {
  expect<AckResponse>(call(UpdateGradRequest{key, std::move(gradient), learning_rate, source}));
}

std::vector<std::optional<FeatureRecord>> BankClient::lookup_features(
    std::vector<KnowledgeKey> keys) {
  return expect<LookupFeatResponse>(call(LookupFeatRequest{std::move(keys)})).records;
}

void BankClient::set_features(const KnowledgeKey& key, FeatureRecord record) {
  expect<AckResponse>(call(SetFeatRequest{key, std::move(record)}));
}

std::vector<KnnHit> BankClient::knn(const std::string& ns, Vector query, uint32_t k,
                                    Metric metric) {
  return expect<KnnResponse>(call(KnnRequest{ns, std::move(query), k, metric})).hits;
}

std::vector<ShardStats> BankClient::stats() {
  return expect<StatsResponse>(call(StatsRequest{})).shards;
}

uint64_t BankClient::tick() { return expect<TickResponse>(call(TickRequest{})).flushed; }

void BankClient::close() {
  if (channel_) channel_->close();
  channel_.reset();
}

}  // namespace knowbank::rpc
