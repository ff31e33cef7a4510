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
#include "knowbank/core/types.h"

#include <cmath>

#include "knowbank/core/error.h"

namespace knowbank {

void validate_record(const FeatureRecord& record) {
  for (const Neighbor& n : record.neighbors) {
    if (!std::isfinite(n.weight) || n.weight < 0.0f) {
      throw_error(ErrorCode::kMalformedRecord,
                  "neighbor '" + n.key.id + "' has invalid weight " + std::to_string(n.weight));
    }
    if (n.key.id.empty()) throw_error(ErrorCode::kMalformedRecord, "neighbor with empty id");
  }
  if (record.label_dist) {
    double sum = 0.0;
    for (float p : *record.label_dist) {
      if (!std::isfinite(p) || p < 0.0f) {
        throw_error(ErrorCode::kMalformedRecord, "label_dist has a negative or non-finite entry");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw_error(ErrorCode::kMalformedRecord,
                  "label_dist sums to " + std::to_string(sum) + ", expected 1");
    }
  }
  if (record.raw_features) {
    for (float x : *record.raw_features) {
      if (!std::isfinite(x)) throw_error(ErrorCode::kMalformedRecord, "non-finite raw feature");
    }
  }
}

}  // namespace knowbank
