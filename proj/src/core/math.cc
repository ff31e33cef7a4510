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
#include "knowbank/core/math.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "knowbank/core/error.h"

namespace knowbank {

bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

void check_finite(std::span<const float> v, std::string_view what) {
  if (!all_finite(v)) {
    throw_error(ErrorCode::kNonFinite, std::string(what) + " contains NaN or Inf");
  }
}

void check_same_dim(size_t a, size_t b, std::string_view what) {
  if (a != b) {
    throw_error(ErrorCode::kDimensionMismatch, std::string(what) + ": expected dim " +
                                                   std::to_string(b) + ", got " +
                                                   std::to_string(a));
  }
}

double dot(std::span<const float> a, std::span<const float> b) {
  check_same_dim(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double l2norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

double l2sq(std::span<const float> a, std::span<const float> b) {
  check_same_dim(a.size(), b.size(), "l2sq");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  check_same_dim(a.size(), b.size(), "cosine");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

}  // namespace knowbank
