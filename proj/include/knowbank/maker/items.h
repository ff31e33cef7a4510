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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knowbank/core/types.h"

namespace knowbank::maker {

// One input record: key id, raw features and an optional observed label.
struct Item {
  std::string id;
  Vector features;
  std::optional<uint32_t> label;

  bool operator==(const Item&) const = default;
};

std::string base64_encode(std::string_view bytes);
// Throws kMalformedRecord on invalid input.
std::string base64_decode(std::string_view text);

// Line format: id TAB base64(encoded vector) [TAB label index].
std::string format_item(const Item& item);
Item parse_item(std::string_view line);

std::vector<Item> read_items(const std::filesystem::path& path);
void write_items(const std::filesystem::path& path, std::span<const Item> items);

}  // namespace knowbank::maker
