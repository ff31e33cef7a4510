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

#include <filesystem>
#include <vector>

#include "json.hpp"
#include "knowbank/bank/knowledge_bank.h"

namespace knowbank::harness {

// Bank layout as read by "bank serve --config".
struct BankConfig {
  BankOptions options;
  std::vector<NamespaceConfig> namespaces;
};

nlohmann::json bank_config_to_json(const BankConfig& c);
BankConfig bank_config_from_json(const nlohmann::json& j);
BankConfig load_bank_config(const std::filesystem::path& path);
void save_bank_config(const BankConfig& c, const std::filesystem::path& path);

}  // namespace knowbank::harness
