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
#include "knowbank/harness/bank_config.h"

#include <fstream>

#include "knowbank/core/error.h"

namespace knowbank::harness {

using nlohmann::json;

json bank_config_to_json(const BankConfig& c) {
  json spaces = json::array();
  for (const auto& n : c.namespaces) {
    json j{{"name", n.name}, {"kind", n.kind == NamespaceKind::kFeatures ? "features" : "embeddings"}};
    if (n.kind == NamespaceKind::kEmbeddings) {
      j["dim"] = n.dim;
      j["init"] = n.init == InitKind::kUniform ? "uniform" : "zeros";
      j["init_scale"] = n.init_scale;
      j["init_seed"] = n.init_seed;
      j["flush_expiry_ticks"] = n.flush_expiry_ticks;
      j["flush_expiry_ms"] = n.flush_expiry_ms;
      j["outlier_factor"] = n.outlier_factor;
    }
    spaces.push_back(std::move(j));
  }
  return json{{"num_shards", c.options.num_shards},
              {"flush_on_scan", c.options.flush_on_scan},
              {"namespaces", std::move(spaces)}};
}

BankConfig bank_config_from_json(const json& j) {
  BankConfig c;
  if (!j.is_object()) throw_error(ErrorCode::kConfigError, "bank config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "num_shards" && key != "flush_on_scan" && key != "namespaces") {
      throw_error(ErrorCode::kConfigError, "bank config: unknown key '" + key + "'");
    }
  }
  try {
    c.options.num_shards = j.value("num_shards", 1u);
    c.options.flush_on_scan = j.value("flush_on_scan", false);
    for (const auto& n : j.at("namespaces")) {
      NamespaceConfig ns;
      ns.name = n.at("name").get<std::string>();
      const std::string kind = n.value("kind", "embeddings");
      if (kind == "features") {
        ns.kind = NamespaceKind::kFeatures;
      } else if (kind == "embeddings") {
        ns.kind = NamespaceKind::kEmbeddings;
        ns.dim = n.at("dim").get<uint32_t>();
        const std::string init = n.value("init", "zeros");
        if (init != "zeros" && init != "uniform") {
          throw_error(ErrorCode::kConfigError, "unknown init '" + init + "'");
        }
        ns.init = init == "uniform" ? InitKind::kUniform : InitKind::kZeros;
        ns.init_scale = n.value("init_scale", 0.0f);
        ns.init_seed = n.value("init_seed", uint64_t{0});
        ns.flush_expiry_ticks = n.value("flush_expiry_ticks", uint64_t{0});
        ns.flush_expiry_ms = n.value("flush_expiry_ms", uint64_t{0});
        ns.outlier_factor = n.value("outlier_factor", 3.0);
      } else {
        throw_error(ErrorCode::kConfigError, "unknown namespace kind '" + kind + "'");
      }
      c.namespaces.push_back(std::move(ns));
    }
  } catch (const json::exception& e) {
    throw_error(ErrorCode::kConfigError, std::string("bank config: ") + e.what());
  }
  return c;
}

BankConfig load_bank_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorCode::kIoError, "cannot open " + path.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw_error(ErrorCode::kConfigError, path.string() + ": invalid JSON");
  return bank_config_from_json(j);
}

void save_bank_config(const BankConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << bank_config_to_json(c).dump(2) << '\n';
  if (!out) throw_error(ErrorCode::kIoError, "cannot write " + path.string());
}

}  // namespace knowbank::harness
