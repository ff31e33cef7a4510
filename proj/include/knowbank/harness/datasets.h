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
#include <string>
#include <vector>

#include "knowbank/core/types.h"

namespace knowbank::harness {

enum class Split : uint8_t { kTrain, kTest };

struct DataItem {
  std::string id;
  Vector x;
  Vector y;  // second modality, pair datasets only
  uint32_t truth = 0;
  std::optional<uint32_t> observed;  // what the system may see
  Split split = Split::kTrain;

  bool operator==(const DataItem&) const = default;
};

struct Edge {
  uint32_t a = 0;
  uint32_t b = 0;
  float weight = 1.0f;

  bool operator==(const Edge&) const = default;
};

struct SyntheticDataset {
  uint32_t classes = 0;
  std::vector<DataItem> items;
  std::vector<Edge> edges;  // undirected, a < b

  bool operator==(const SyntheticDataset&) const = default;
};

struct BlobParams {
  uint32_t n = 1000;
  uint32_t dims = 40;
  uint32_t classes = 4;
  double separation = 4.0;  // norm of each class center (centers sum to zero)
  double noise = 0.0;       // observed-label flip probability
  double labeled_fraction = 1.0;
  uint32_t test_n = 0;
  uint64_t seed = 1;
};

struct SbmParams {
  uint32_t n = 200;
  uint32_t classes = 2;
  double p_in = 0.2;
  double p_out = 0.01;
  uint32_t dims = 50;
  double separation = 1.0;
  double labeled_fraction = 0.1;
  uint64_t seed = 1;
};

struct PairParams {
  uint32_t n = 2000;
  uint32_t test_n = 200;
  uint32_t latent_dim = 8;
  uint32_t dims_a = 24;
  uint32_t dims_b = 24;
  double noise = 0.3;
  uint64_t seed = 1;
};

// Gaussian class blobs; observed labels flip to a uniform wrong class with
// probability noise. Test items carry no observed label.
SyntheticDataset gen_blobs(const BlobParams& p);
// Stochastic block model over blob features with balanced classes.
SyntheticDataset gen_sbm(const SbmParams& p);
// Two views of a shared latent factor: x = A z + e, y = B z + e'.
SyntheticDataset gen_pairs(const PairParams& p);

// Directory layout: items.tsv and items_b.tsv (maker item lines for the
// training split), test.tsv, truth.tsv, edges.tsv, meta.json.
void save_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir);
SyntheticDataset load_dataset(const std::filesystem::path& dir);

}  // namespace knowbank::harness
