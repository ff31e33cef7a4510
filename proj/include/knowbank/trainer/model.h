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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knowbank/core/types.h"

namespace knowbank::trainer {

enum class Variant : uint8_t { kGraphReg, kEncoderGnn, kTwoTower };

const char* variant_name(Variant v);
Variant parse_variant(std::string_view name);

// Parameter names shared with makers through checkpoints.
inline constexpr std::string_view kEncoderW = "encoder/W";
inline constexpr std::string_view kClassifierV = "classifier/V";
inline constexpr std::string_view kGnnU = "gnn/U";
inline constexpr std::string_view kTowerA = "tower_a/W";
inline constexpr std::string_view kTowerB = "tower_b/W";

struct ModelSpec {
  Variant variant = Variant::kGraphReg;
  uint32_t input_dim = 0;
  uint32_t input_dim_b = 0;  // second modality, two_tower only
  uint32_t hidden_dim = 0;
  uint32_t num_classes = 0;
  double temperature = 0.1;
  double lambda = 0.0;
  double fresh_fraction = 0.5;
  double init_scale = 0.3;
};

void validate_spec(const ModelSpec& spec);

using ParamMap = std::map<std::string, MatrixD, std::less<>>;

// Uniform(-init_scale, init_scale) for every matrix the variant uses.
ParamMap init_params(const ModelSpec& spec, uint64_t seed);
ParamMap to_double(const std::map<std::string, Matrix>& params);
std::map<std::string, Matrix> to_float(const ParamMap& params);
const MatrixD& param(const ParamMap& params, std::string_view name);

std::vector<double> matvec(const MatrixD& m, std::span<const double> v);
std::vector<double> encode(const MatrixD& w, std::span<const float> x);
std::vector<double> encode(const MatrixD& w, std::span<const double> x);
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> classify(const MatrixD& v, std::span<const double> h);
Vector to_vector(std::span<const double> v);

struct NeighborInput {
  Vector h;  // fetched embedding, a constant in the backward pass
  float weight = 1.0f;
};

struct NodeExample {
  Vector x;
  std::optional<Vector> target;  // label distribution; absent for unlabeled nodes
  std::vector<NeighborInput> neighbors;
};

struct PairExample {
  Vector x;
  Vector y;
  bool fresh = true;
  // Used instead of the towers when fresh is false.
  Vector cached_a;
  Vector cached_b;
};

struct TwoTowerBatch {
  std::vector<PairExample> pairs;
  std::vector<Vector> negatives_a;  // candidates for the b -> a direction
  std::vector<Vector> negatives_b;  // candidates for the a -> b direction
};

struct LossOutput {
  double loss = 0.0;
  double supervised = 0.0;
  double regularizer = 0.0;  // unweighted pair-normalized distance term
  ParamMap grads;
  // d loss / d h_i for every example's own embedding.
  std::vector<std::vector<double>> own_grads;
  // d loss / d h_j as if fetched embeddings were variables; never applied to
  // params, only pushed to the bank when enabled.
  std::vector<std::vector<std::vector<double>>> neighbor_grads;
  size_t labeled = 0;
  size_t correct = 0;
};

// Mean cross-entropy over labeled examples (0 when none) plus
// lambda * sum_ij w_ij |h_i - h_j|^2 / (number of pairs).
LossOutput loss_graph_reg(const ParamMap& params, std::span<const NodeExample> batch,
                          double lambda);

// z_i = tanh(U mean({h_i} u {h_j})), cross-entropy of softmax(V z_i).
// A batch with no labeled example has zero loss and zero gradient.
LossOutput loss_encoder_gnn(const ParamMap& params, std::span<const NodeExample> batch);

// Symmetric InfoNCE over cosine / temperature for each fresh pair. Candidates
// are every pair in the batch plus the cached negatives.
LossOutput loss_two_tower(const ParamMap& params, const TwoTowerBatch& batch, double temperature);

// p := float(p - lr * g) for every gradient present.
void sgd_update(std::map<std::string, Matrix>& params, const ParamMap& grads, double lr);

}  // namespace knowbank::trainer
