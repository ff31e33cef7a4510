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

#include <span>
#include <string_view>

#include "knowbank/core/types.h"

namespace knowbank {

bool all_finite(std::span<const float> v);

// Throws Error(kNonFinite) naming 'what' when v holds NaN or Inf.
void check_finite(std::span<const float> v, std::string_view what);

// Throws Error(kDimensionMismatch) unless a.size() == b.size().
void check_same_dim(size_t a, size_t b, std::string_view what);

double dot(std::span<const float> a, std::span<const float> b);
double l2norm(std::span<const float> v);

// Squared euclidean distance, accumulated in double.
double l2sq(std::span<const float> a, std::span<const float> b);

// Cosine similarity in [-1, 1]. A zero-norm operand yields 0.
double cosine(std::span<const float> a, std::span<const float> b);

}  // namespace knowbank
