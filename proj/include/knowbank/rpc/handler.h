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

#include <string_view>

#include "knowbank/bank/knowledge_bank.h"
#include "knowbank/rpc/protocol.h"

namespace knowbank::rpc {

// Maps requests onto bank operations. Never throws: failures come back as
// ErrorResponse carrying the error code.
class RequestHandler {
 public:
  explicit RequestHandler(KnowledgeBank& bank) : bank_(bank) {}

  Response handle(const Request& req);
  Response handle_payload(MsgType type, std::string_view payload);

 private:
  KnowledgeBank& bank_;
};

}  // namespace knowbank::rpc
