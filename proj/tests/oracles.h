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

// Reference implementations used only by tests. Each one is written directly
// from the documented rule, without sharing code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

// Scalar model of one embedding key under lazy updates.
struct LazyKey {
  std::vector<double> value;
  std::vector<std::vector<double>> pending;
  double outlier_factor = 3.0;

  void update(const std::vector<float>& grad, float lr) {
    std::vector<double> d(grad.size());
    for (size_t i = 0; i < grad.size(); ++i) {
      d[i] = static_cast<double>(static_cast<float>(lr * grad[i]));
    }
    pending.push_back(std::move(d));
  }

  void set(const std::vector<float>& v) {
    value.assign(v.begin(), v.end());
    pending.clear();
  }

  void flush() {
    if (pending.empty()) return;
    std::vector<bool> keep(pending.size(), true);
    if (pending.size() >= 3) {
      std::vector<double> norms;
      for (const auto& d : pending) {
        double s = 0;
        for (double x : d) s += x * x;
        norms.push_back(std::sqrt(s));
      }
      std::vector<double> sorted = norms;
      std::sort(sorted.begin(), sorted.end());
      const size_t n = sorted.size();
      const double m = (n & 1) ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2;
      if (m > 0) {
        for (size_t i = 0; i < n; ++i) keep[i] = norms[i] <= outlier_factor * m;
      }
    }
    std::vector<double> sum(value.size(), 0.0);
    size_t count = 0;
    for (size_t i = 0; i < pending.size(); ++i) {
      if (!keep[i]) continue;
      ++count;
      for (size_t j = 0; j < sum.size(); ++j) sum[j] += pending[i][j];
    }
    if (count > 0) {
      for (size_t j = 0; j < value.size(); ++j) {
        value[j] = static_cast<float>(value[j] - sum[j] / static_cast<double>(count));
      }
    }
    pending.clear();
  }
};

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += double(a[i]) * b[i];
    aa += double(a[i]) * a[i];
    bb += double(b[i]) * b[i];
  }
  if (aa == 0 || bb == 0) return 0.0;
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

inline double neg_l2(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    s += d * d;
  }
  return -s;
}

// Full sort of every (id, score) pair; ties by id ascending.
inline std::vector<std::pair<std::string, double>> brute_knn(
    const std::vector<std::pair<std::string, std::vector<float>>>& store,
    const std::vector<float>& q, size_t k, bool use_cosine) {
  std::vector<std::pair<std::string, double>> all;
  for (const auto& [id, v] : store) all.emplace_back(id, use_cosine ? cosine(q, v) : neg_l2(q, v));
  std::stable_sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    return x.second != y.second ? x.second > y.second : x.first < y.first;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

}  // namespace oracle
