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
#include "knowbank/maker/items.h"

#include <openssl/evp.h>

#include <charconv>
#include <fstream>

#include "knowbank/core/codec.h"
#include "knowbank/core/error.h"

namespace knowbank::maker {

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw_error(ErrorCode::kMalformedRecord, "base64 length");
  std::string out(3 * (text.size() / 4) + 1, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw_error(ErrorCode::kMalformedRecord, "invalid base64");
  size_t len = static_cast<size_t>(n);
  // EVP_DecodeBlock counts padding as zero bytes.
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() > 1 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

std::string format_item(const Item& item) {
  std::string line = item.id;
  line += '\t';
  line += base64_encode(encode_vector(item.features));
  if (item.label) {
    line += '\t';
    line += std::to_string(*item.label);
  }
  return line;
}

Item parse_item(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const size_t t1 = line.find('\t');
  if (t1 == std::string_view::npos || t1 == 0) {
    throw_error(ErrorCode::kMalformedRecord, "item line needs id and features");
  }
  Item item;
  item.id = std::string(line.substr(0, t1));
  std::string_view rest = line.substr(t1 + 1);
  const size_t t2 = rest.find('\t');
  item.features = decode_vector(base64_decode(rest.substr(0, t2)));
  if (t2 != std::string_view::npos) {
    const std::string_view lab = rest.substr(t2 + 1);
    if (!lab.empty()) {
      uint32_t v = 0;
      auto [p, ec] = std::from_chars(lab.data(), lab.data() + lab.size(), v);
      if (ec != std::errc{} || p != lab.data() + lab.size()) {
        throw_error(ErrorCode::kMalformedRecord, "bad label '" + std::string(lab) + "'");
      }
      item.label = v;
    }
  }
  return item;
}

std::vector<Item> read_items(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<Item> items;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    try {
      items.push_back(parse_item(line));
    } catch (const Error& e) {
      throw_error(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.detail());
    }
  }
  return items;
}

void write_items(const std::filesystem::path& path, std::span<const Item> items) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw_error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& item : items) out << format_item(item) << '\n';
  if (!out) throw_error(ErrorCode::kIoError, "write failed: " + path.string());
}

}  // namespace knowbank::maker
