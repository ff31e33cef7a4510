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
#include "knowbank/rpc/handler.h"

#include <exception>

#include "knowbank/core/overloaded.h"

namespace knowbank::rpc {

namespace {

Response handle_impl(KnowledgeBank& bank, const Request& req) {
  return std::visit(
      Overloaded{
          [&](const LookupEmbRequest& r) -> Response {
            return LookupEmbResponse{bank.lookup_embeddings(r.keys, r.create_missing)};
          },
          [&](const SetEmbRequest& r) -> Response {
            bank.set_embedding(r.key, r.vector, r.version);
            return AckResponse{MsgType::kSetEmb};
          },
          [&](const UpdateGradRequest& r) -> Response {
            bank.update_gradient(r.key, r.gradient, r.learning_rate, r.source);
            return AckResponse{MsgType::kUpdateGrad};
          },
          [&](const LookupFeatRequest& r) -> Response {
            return LookupFeatResponse{bank.lookup_features(r.keys)};
          },
          [&](const SetFeatRequest& r) -> Response {
            bank.set_features(r.key, r.record);
            return AckResponse{MsgType::kSetFeat};
          },
          [&](const KnnRequest& r) -> Response {
            return KnnResponse{bank.knn_search(r.ns, r.query, r.k, r.metric)};
          },
          [&](const StatsRequest&) -> Response { return StatsResponse{bank.stats()}; },
          [&](const TickRequest&) -> Response { return TickResponse{bank.tick_expiry()}; },
      },
      req);
}

}  // namespace

Response RequestHandler::handle(const Request& req) {
  try {
    return handle_impl(bank_, req);
  } catch (const Error& e) {
    return ErrorResponse{e.code(), e.detail()};
  } catch (const std::exception& e) {
    return ErrorResponse{ErrorCode::kUnknown, e.what()};
  }
}

Response RequestHandler::handle_payload(MsgType type, std::string_view payload) {
  Request req;
  try {
    req = decode_request(type, payload);
  } catch (const Error& e) {
    return ErrorResponse{e.code(), e.detail()};
  }
  return handle(req);
}

}  // namespace knowbank::rpc
