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
#include "knowbank/trainer/model.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "knowbank/core/error.h"

namespace knowbank::trainer {

namespace {

MatrixD zeros_like(const MatrixD& m) { return MatrixD(m.rows, m.cols, 0.0); }

// out += scale * a (outer) b
void add_outer(MatrixD& out, std::span<const double> a, std::span<const double> b,
               double scale = 1.0) {
  for (uint32_t r = 0; r < out.rows; ++r) {
    const double ar = a[r] * scale;
    if (ar == 0.0) continue;
    double* row = &out.data[static_cast<size_t>(r) * out.cols];
    for (uint32_t c = 0; c < out.cols; ++c) row[c] += ar * b[c];
  }
}

void add_outer(MatrixD& out, std::span<const double> a, std::span<const float> b) {
  for (uint32_t r = 0; r < out.rows; ++r) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    double* row = &out.data[static_cast<size_t>(r) * out.cols];
    for (uint32_t c = 0; c < out.cols; ++c) row[c] += ar * b[c];
  }
}

std::vector<double> matvec_t(const MatrixD& m, std::span<const double> v) {
  std::vector<double> out(m.cols, 0.0);
  for (uint32_t r = 0; r < m.rows; ++r) {
    const double vr = v[r];
    const double* row = &m.data[static_cast<size_t>(r) * m.cols];
    for (uint32_t c = 0; c < m.cols; ++c) out[c] += row[c] * vr;
  }
  return out;
}

std::vector<double> to_double_vec(std::span<const float> v) { return {v.begin(), v.end()}; }

void check_dim(size_t got, size_t want, const char* what) {
  if (got != want) {
    throw_error(ErrorCode::kDimensionMismatch, std::string(what) + ": expected " +
                                                   std::to_string(want) + ", got " +
                                                   std::to_string(got));
  }
}

void check_loss(double loss) {
  if (!std::isfinite(loss)) throw_error(ErrorCode::kNonFinite, "loss is not finite");
}

size_t argmax(std::span<const double> v) {
  return static_cast<size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}
size_t argmax(std::span<const float> v) {
  return static_cast<size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Adds the cross-entropy term for one example; returns d loss / d logits.
std::vector<double> ce_grad(std::span<const double> probs, const Vector& target, double scale,
                            LossOutput& out) {
  std::vector<double> d(probs.size());
  double ce = 0.0;
  for (size_t c = 0; c < probs.size(); ++c) {
    if (target[c] > 0.0f) ce -= target[c] * std::log(std::max(probs[c], 1e-300));
    d[c] = (probs[c] - target[c]) * scale;
  }
  out.supervised += ce * scale;
  out.correct += argmax(probs) == argmax(target) ? 1 : 0;
  return d;
}

struct CosineGrad {
  double value = 0.0;
  std::vector<double> da;
  std::vector<double> db;
};

// Zero-norm operands give 0 with zero gradient.
CosineGrad cosine_with_grad(std::span<const double> a, std::span<const double> b) {
  CosineGrad g;
  g.da.assign(a.size(), 0.0);
  g.db.assign(b.size(), 0.0);
  double ab = 0, aa = 0, bb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return g;
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  g.value = ab / (na * nb);
  for (size_t i = 0; i < a.size(); ++i) {
    g.da[i] = b[i] / (na * nb) - g.value * a[i] / aa;
    g.db[i] = a[i] / (na * nb) - g.value * b[i] / bb;
  }
  return g;
}

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kGraphReg: return "graph_reg";
    case Variant::kEncoderGnn: return "encoder_gnn";
    case Variant::kTwoTower: return "two_tower";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "graph_reg") return Variant::kGraphReg;
  if (name == "encoder_gnn") return Variant::kEncoderGnn;
  if (name == "two_tower") return Variant::kTwoTower;
  throw_error(ErrorCode::kConfigError, "unknown variant '" + std::string(name) + "'");
}

void validate_spec(const ModelSpec& s) {
  if (s.input_dim == 0 || s.hidden_dim == 0) {
    throw_error(ErrorCode::kConfigError, "input_dim and hidden_dim must be positive");
  }
  if (s.variant == Variant::kTwoTower) {
    if (s.input_dim_b == 0) throw_error(ErrorCode::kConfigError, "input_dim_b must be positive");
    if (!(s.temperature > 0.0)) throw_error(ErrorCode::kConfigError, "temperature must be > 0");
    if (!(s.fresh_fraction > 0.0 && s.fresh_fraction <= 1.0)) {
      throw_error(ErrorCode::kConfigError, "fresh_fraction must be in (0, 1]");
    }
  } else if (s.num_classes < 2) {
    throw_error(ErrorCode::kConfigError, "num_classes must be >= 2");
  }
  if (!std::isfinite(s.lambda) || s.lambda < 0.0) {
    throw_error(ErrorCode::kConfigError, "lambda must be finite and >= 0");
  }
}

ParamMap init_params(const ModelSpec& spec, uint64_t seed) {
  validate_spec(spec);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spec.init_scale, spec.init_scale);
  auto make = [&](uint32_t rows, uint32_t cols) {
    MatrixD m(rows, cols);
    for (double& x : m.data) x = static_cast<float>(u(rng));
    return m;
  };
  ParamMap p;
  switch (spec.variant) {
    case Variant::kGraphReg:
      p.emplace(kEncoderW, make(spec.hidden_dim, spec.input_dim));
      p.emplace(kClassifierV, make(spec.num_classes, spec.hidden_dim));
      break;
    case Variant::kEncoderGnn:
      p.emplace(kEncoderW, make(spec.hidden_dim, spec.input_dim));
      p.emplace(kGnnU, make(spec.hidden_dim, spec.hidden_dim));
      p.emplace(kClassifierV, make(spec.num_classes, spec.hidden_dim));
      break;
    case Variant::kTwoTower:
      p.emplace(kTowerA, make(spec.hidden_dim, spec.input_dim));
      p.emplace(kTowerB, make(spec.hidden_dim, spec.input_dim_b));
      break;
  }
  return p;
}

ParamMap to_double(const std::map<std::string, Matrix>& params) {
  ParamMap out;
  for (const auto& [name, m] : params) {
    MatrixD d(m.rows, m.cols);
    std::copy(m.data.begin(), m.data.end(), d.data.begin());
    out.emplace(name, std::move(d));
  }
  return out;
}

std::map<std::string, Matrix> to_float(const ParamMap& params) {
  std::map<std::string, Matrix> out;
  for (const auto& [name, m] : params) {
    Matrix f(m.rows, m.cols);
    for (size_t i = 0; i < m.data.size(); ++i) f.data[i] = static_cast<float>(m.data[i]);
    out.emplace(name, std::move(f));
  }
  return out;
}

const MatrixD& param(const ParamMap& params, std::string_view name) {
  auto it = params.find(name);
  if (it == params.end()) {
    throw_error(ErrorCode::kConfigError, "missing parameter '" + std::string(name) + "'");
  }
  return it->second;
}

std::vector<double> matvec(const MatrixD& m, std::span<const double> v) {
  check_dim(v.size(), m.cols, "matvec");
  std::vector<double> out(m.rows, 0.0);
  for (uint32_t r = 0; r < m.rows; ++r) {
    const double* row = &m.data[static_cast<size_t>(r) * m.cols];
    double s = 0.0;
    for (uint32_t c = 0; c < m.cols; ++c) s += row[c] * v[c];
    out[r] = s;
  }
  return out;
}

std::vector<double> encode(const MatrixD& w, std::span<const double> x) {
  std::vector<double> h = matvec(w, x);
  for (double& v : h) v = std::tanh(v);
  return h;
}

std::vector<double> encode(const MatrixD& w, std::span<const float> x) {
  const std::vector<double> xd = to_double_vec(x);
  return encode(w, std::span<const double>(xd));
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> classify(const MatrixD& v, std::span<const double> h) {
  return softmax(matvec(v, h));
}

Vector to_vector(std::span<const double> v) {
  Vector out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

LossOutput loss_graph_reg(const ParamMap& params, std::span<const NodeExample> batch,
                          double lambda) {
  const MatrixD& w = param(params, kEncoderW);
  const MatrixD& v = param(params, kClassifierV);
  LossOutput out;
  out.grads.emplace(kEncoderW, zeros_like(w));
  out.grads.emplace(kClassifierV, zeros_like(v));
  MatrixD& dw = out.grads.find(kEncoderW)->second;
  MatrixD& dv = out.grads.find(kClassifierV)->second;

  size_t pairs = 0;
  for (const auto& ex : batch) {
    if (ex.target) {
      check_dim(ex.target->size(), v.rows, "label distribution");
      ++out.labeled;
    }
    pairs += ex.neighbors.size();
  }
  const double ce_scale = out.labeled ? 1.0 / static_cast<double>(out.labeled) : 0.0;
  const double reg_scale = pairs > 0 ? 1.0 / static_cast<double>(pairs) : 0.0;

  out.own_grads.resize(batch.size());
  out.neighbor_grads.resize(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    const NodeExample& ex = batch[i];
    const std::vector<double> h = encode(w, ex.x);
    std::vector<double> dh(h.size(), 0.0);
    if (ex.target) {
      const std::vector<double> probs = classify(v, h);
      const std::vector<double> dlogits = ce_grad(probs, *ex.target, ce_scale, out);
      add_outer(dv, dlogits, h);
      dh = matvec_t(v, dlogits);
    }
    out.neighbor_grads[i].resize(ex.neighbors.size());
    for (size_t j = 0; j < ex.neighbors.size(); ++j) {
      const NeighborInput& nb = ex.neighbors[j];
      check_dim(nb.h.size(), h.size(), "neighbor embedding");
      double dist = 0.0;
      std::vector<double>& ng = out.neighbor_grads[i][j];
      ng.resize(h.size());
      for (size_t k = 0; k < h.size(); ++k) {
        const double diff = h[k] - nb.h[k];
        dist += diff * diff;
        const double g = 2.0 * lambda * reg_scale * nb.weight * diff;
        dh[k] += g;
        ng[k] = -g;
      }
      out.regularizer += nb.weight * dist * reg_scale;
    }
    std::vector<double> dpre(h.size());
    for (size_t k = 0; k < h.size(); ++k) dpre[k] = dh[k] * (1.0 - h[k] * h[k]);
    add_outer(dw, dpre, ex.x);
    out.own_grads[i] = std::move(dh);
  }
  out.loss = out.supervised + lambda * out.regularizer;
  check_loss(out.loss);
  return out;
}

LossOutput loss_encoder_gnn(const ParamMap& params, std::span<const NodeExample> batch) {
  const MatrixD& w = param(params, kEncoderW);
  const MatrixD& u = param(params, kGnnU);
  const MatrixD& v = param(params, kClassifierV);
  LossOutput out;
  out.grads.emplace(kEncoderW, zeros_like(w));
  out.grads.emplace(kGnnU, zeros_like(u));
  out.grads.emplace(kClassifierV, zeros_like(v));
  MatrixD& dw = out.grads.find(kEncoderW)->second;
  MatrixD& du = out.grads.find(kGnnU)->second;
  MatrixD& dv = out.grads.find(kClassifierV)->second;

  for (const auto& ex : batch) {
    if (ex.target) {
      check_dim(ex.target->size(), v.rows, "label distribution");
      ++out.labeled;
    }
  }
  const double ce_scale = out.labeled ? 1.0 / static_cast<double>(out.labeled) : 0.0;

  out.own_grads.resize(batch.size());
  out.neighbor_grads.resize(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    const NodeExample& ex = batch[i];
    const std::vector<double> h = encode(w, ex.x);
    out.own_grads[i].assign(h.size(), 0.0);
    out.neighbor_grads[i].assign(ex.neighbors.size(), std::vector<double>(h.size(), 0.0));
    if (!ex.target) continue;

    const double inv = 1.0 / static_cast<double>(1 + ex.neighbors.size());
    std::vector<double> m = h;
    for (const NeighborInput& nb : ex.neighbors) {
      check_dim(nb.h.size(), h.size(), "neighbor embedding");
      for (size_t k = 0; k < h.size(); ++k) m[k] += nb.h[k];
    }
    for (double& x : m) x *= inv;
    const std::vector<double> z = encode(u, m);
    const std::vector<double> probs = classify(v, z);
    const std::vector<double> dlogits = ce_grad(probs, *ex.target, ce_scale, out);
    add_outer(dv, dlogits, z);
    std::vector<double> dz = matvec_t(v, dlogits);
    for (size_t k = 0; k < z.size(); ++k) dz[k] *= 1.0 - z[k] * z[k];
    add_outer(du, dz, m);
    std::vector<double> dm = matvec_t(u, dz);
    for (double& x : dm) x *= inv;
    for (auto& ng : out.neighbor_grads[i]) ng = dm;
    std::vector<double> dpre(h.size());
    for (size_t k = 0; k < h.size(); ++k) dpre[k] = dm[k] * (1.0 - h[k] * h[k]);
    add_outer(dw, dpre, ex.x);
    out.own_grads[i] = std::move(dm);
  }
  out.loss = out.supervised;
  check_loss(out.loss);
  return out;
}

LossOutput loss_two_tower(const ParamMap& params, const TwoTowerBatch& batch,
                          double temperature) {
  const MatrixD& wa = param(params, kTowerA);
  const MatrixD& wb = param(params, kTowerB);
  LossOutput out;
  out.grads.emplace(kTowerA, zeros_like(wa));
  out.grads.emplace(kTowerB, zeros_like(wb));
  MatrixD& dwa = out.grads.find(kTowerA)->second;
  MatrixD& dwb = out.grads.find(kTowerB)->second;

  const size_t n = batch.pairs.size();
  std::vector<std::vector<double>> a(n), b(n);
  std::vector<size_t> fresh;
  for (size_t i = 0; i < n; ++i) {
    const PairExample& p = batch.pairs[i];
    if (p.fresh) {
      a[i] = encode(wa, p.x);
      b[i] = encode(wb, p.y);
      fresh.push_back(i);
    } else {
      check_dim(p.cached_a.size(), wa.rows, "cached tower_a embedding");
      check_dim(p.cached_b.size(), wb.rows, "cached tower_b embedding");
      a[i] = to_double_vec(p.cached_a);
      b[i] = to_double_vec(p.cached_b);
    }
  }
  if (fresh.empty()) throw_error(ErrorCode::kInvalidArgument, "batch has no fresh pair");
  auto as_double = [](const std::vector<Vector>& vs, uint32_t dim) {
    std::vector<std::vector<double>> out;
    for (const Vector& v : vs) {
      check_dim(v.size(), dim, "cached negative");
      out.push_back(to_double_vec(v));
    }
    return out;
  };
  const auto neg_a = as_double(batch.negatives_a, wa.rows);
  const auto neg_b = as_double(batch.negatives_b, wb.rows);

  std::vector<std::vector<double>> da(n, std::vector<double>(wa.rows, 0.0));
  std::vector<std::vector<double>> db(n, std::vector<double>(wb.rows, 0.0));
  const double scale = 1.0 / (2.0 * static_cast<double>(fresh.size()));

  // One direction: queries q from one tower against keys from the other.
  auto direction = [&](const std::vector<std::vector<double>>& q,
                       const std::vector<std::vector<double>>& keys,
                       const std::vector<std::vector<double>>& negs,
                       std::vector<std::vector<double>>& dq,
                       std::vector<std::vector<double>>& dkeys) {
    for (size_t i : fresh) {
      const size_t m = n + negs.size();
      std::vector<CosineGrad> cg(m);
      std::vector<double> logits(m);
      for (size_t k = 0; k < m; ++k) {
        cg[k] = cosine_with_grad(q[i], k < n ? keys[k] : negs[k - n]);
        logits[k] = cg[k].value / temperature;
      }
      const std::vector<double> p = softmax(logits);
      out.loss -= scale * std::log(std::max(p[i], 1e-300));
      out.correct += argmax(p) == i ? 1 : 0;
      for (size_t k = 0; k < m; ++k) {
        const double g = scale * (p[k] - (k == i ? 1.0 : 0.0)) / temperature;
        if (g == 0.0) continue;
        for (size_t d = 0; d < q[i].size(); ++d) dq[i][d] += g * cg[k].da[d];
        if (k < n && batch.pairs[k].fresh) {
          for (size_t d = 0; d < dkeys[k].size(); ++d) dkeys[k][d] += g * cg[k].db[d];
        }
      }
    }
  };
  if (wa.rows != wb.rows) throw_error(ErrorCode::kDimensionMismatch, "tower output dims differ");
  direction(a, b, neg_b, da, db);
  direction(b, a, neg_a, db, da);
  out.labeled = 2 * fresh.size();

  for (size_t i : fresh) {
    std::vector<double> pa(a[i].size()), pb(b[i].size());
    for (size_t d = 0; d < pa.size(); ++d) pa[d] = da[i][d] * (1.0 - a[i][d] * a[i][d]);
    for (size_t d = 0; d < pb.size(); ++d) pb[d] = db[i][d] * (1.0 - b[i][d] * b[i][d]);
    add_outer(dwa, pa, batch.pairs[i].x);
    add_outer(dwb, pb, batch.pairs[i].y);
  }
  out.supervised = out.loss;
  check_loss(out.loss);
  return out;
}

void sgd_update(std::map<std::string, Matrix>& params, const ParamMap& grads, double lr) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) {
      throw_error(ErrorCode::kConfigError, "gradient for unknown parameter '" + name + "'");
    }
    Matrix& p = it->second;
    if (p.rows != g.rows || p.cols != g.cols) {
      throw_error(ErrorCode::kDimensionMismatch, "gradient shape for '" + name + "'");
    }
    for (size_t i = 0; i < p.data.size(); ++i) {
      const double next = static_cast<double>(p.data[i]) - lr * g.data[i];
      if (!std::isfinite(next)) {
        throw_error(ErrorCode::kNonFinite, "parameter '" + name + "' diverged");
      }
      p.data[i] = static_cast<float>(next);
    }
  }
}

}  // namespace knowbank::trainer
