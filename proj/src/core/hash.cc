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
#include "knowbank/core/hash.h"

namespace knowbank {

uint64_t key_hash(const KnowledgeKey& key) {
  uint64_t h = fnv1a64(key.ns);
  h = fnv1a64(std::string_view("\0", 1), h);
  return fnv1a64(key.id, h);
}

uint32_t shard_of(const KnowledgeKey& key, uint32_t num_shards) {
  if (num_shards <= 1) return 0;
  return static_cast<uint32_t>(key_hash(key) % num_shards);
}

size_t KnowledgeKeyHash::operator()(const KnowledgeKey& key) const {
  return static_cast<size_t>(key_hash(key));
}

}  // namespace knowbank
