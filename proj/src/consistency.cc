// Copyright 2026 The FTTA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ftta/consistency.h"

#include <algorithm>
#include <cmath>

namespace ftta {

ConsistencyWeights ConsistencyWeights::Zeros() {
  return {Tensor(Shape{kGroupSize}, 0.0, true), Tensor(Shape{kGroupSize}, 0.0, true)};
}

void ConsistencyWeights::Reset() {
  for (Tensor* t : {&u, &v}) {
    auto d = t->mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
    t->zero_grad();
  }
}

std::array<Grid, AdaptationBatch::kNumImages> AdaptationBatch::Images() const {
  std::array<Grid, kNumImages> out;
  out[0] = x_t;
  out[1] = x_t1;
  out[2] = x_t2;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < kGroupSize; ++j) out[3 + i * kGroupSize + j] = groups[i][j];
  }
  return out;
}

std::string LossFlags::ToString() const {
  std::string s;
  auto add = [&s](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += '|';
    s += name;
  };
  add(zero_norm_feature, "zero_norm_feature");
  add(degenerate_cam, "degenerate_cam");
  add(local_skipped, "local_skipped");
  add(log_saturated, "log_saturated");
  return s.empty() ? "-" : s;
}

Tensor IntegrateGroup(Graph& graph, std::span<const Tensor> items, const Tensor& weights) {
  if (items.size() != kGroupSize) {
    throw Error("integrate: group size must be 4, got " + std::to_string(items.size()));
  }
  if (weights.shape() != Shape{kGroupSize}) {
    throw ShapeError("integrate weights", weights.shape(), Shape{kGroupSize});
  }
  const Tensor probs = graph.Softmax(weights);
  Tensor acc;
  for (std::size_t j = 0; j < kGroupSize; ++j) {
    if (items[j].shape() != items[0].shape()) {
      throw ShapeError("integrate", items[0].shape(), items[j].shape());
    }
    Tensor term = graph.Scale(items[j], graph.Row(probs, j));
    acc = acc.defined() ? graph.Add(acc, term) : term;
  }
  return acc;
}

namespace {

Tensor CosineDistance(Graph& graph, const Tensor& a, const Tensor& b, bool* zero_norm) {
  const auto x = a.data();
  const auto y = b.data();
  double dot = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  const double na = std::sqrt(xx), nb = std::sqrt(yy);
  const bool degenerate = na == 0.0 || nb == 0.0;
  const bool identical = !degenerate && std::equal(x.begin(), x.end(), y.begin());
  if (zero_norm) *zero_norm = degenerate;
  const double denom = std::max(na * nb, kCosineEpsilon);
  const double cosine = degenerate ? 0.0 : (identical ? 1.0 : dot / denom);
  const bool floored = na * nb < kCosineEpsilon;
  return graph.Record(
      "cosine_distance", {a, b}, Shape{}, {1.0 - cosine},
      [=](std::span<const double> g, InputGrads grads) {
        // Identical inputs are the exact minimizer; zero-norm inputs are constant.
        if (degenerate || identical) return;
        const auto x = a.data();
        const auto y = b.data();
        for (std::size_t i = 0; i < x.size(); ++i) {
          double dx, dy;
          if (floored) {
            dx = y[i] / denom;
            dy = x[i] / denom;
          } else {
            dx = y[i] / denom - cosine * x[i] / (na * na);
            dy = x[i] / denom - cosine * y[i] / (nb * nb);
          }
          if (!grads[0].empty()) grads[0][i] -= g[0] * dx;
          if (!grads[1].empty()) grads[1][i] -= g[0] * dy;
        }
      });
}

Tensor JensenShannonOp(Graph& graph, const Tensor& p, const Tensor& q) {
  const double value = JensenShannon(p.data(), q.data());
  return graph.Record("jensen_shannon", {p, q}, Shape{}, {value},
                      [p, q](std::span<const double> g, InputGrads grads) {
                        const auto a = p.data();
                        const auto b = q.data();
                        for (std::size_t i = 0; i < a.size(); ++i) {
                          const double m = 0.5 * (a[i] + b[i]);
                          const double lm = std::log(m + kJsEpsilon);
                          const double tm = m / (m + kJsEpsilon);
                          if (!grads[0].empty()) {
                            grads[0][i] += g[0] * 0.5 *
                                           ((std::log(a[i] + kJsEpsilon) - lm) +
                                            (a[i] / (a[i] + kJsEpsilon) - tm));
                          }
                          if (!grads[1].empty()) {
                            grads[1][i] += g[0] * 0.5 *
                                           ((std::log(b[i] + kJsEpsilon) - lm) +
                                            (b[i] / (b[i] + kJsEpsilon) - tm));
                          }
                        }
                      });
}

void RequireNormalized(const Tensor& t, const char* what) {
  double s = 0.0;
  for (double v : t.data()) {
    if (v < 0.0) throw Error(std::string(what) + ": negative map value");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-3) {
    throw Error(std::string(what) + ": map is not normalized (sum " + std::to_string(s) + ")");
  }
}

}  // namespace

double JensenShannon(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("jensen_shannon", Shape{p.size()}, Shape{q.size()});
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    const double lm = std::log(m + kJsEpsilon);
    js += p[i] * (std::log(p[i] + kJsEpsilon) - lm) + q[i] * (std::log(q[i] + kJsEpsilon) - lm);
  }
  return 0.5 * js;
}

Tensor LossGlobal(Graph& graph, const Tensor& f1, const Tensor& f2, LossFlags* flags) {
  if (f1.shape() != f2.shape()) throw ShapeError("loss_global", f1.shape(), f2.shape());
  const Tensor diff = graph.Sub(f1, f2);
  const Tensor mse = graph.Mean(graph.Mul(diff, diff));
  bool zero_norm = false;
  const Tensor cosine = CosineDistance(graph, f1, f2, &zero_norm);
  if (flags && zero_norm) flags->zero_norm_feature = true;
  return graph.Add(mse, cosine);
}

Tensor LossLocal(Graph& graph, const Tensor& c1, const Tensor& c2) {
  if (c1.shape() != c2.shape()) throw ShapeError("loss_local", c1.shape(), c2.shape());
  RequireNormalized(c1, "loss_local");
  RequireNormalized(c2, "loss_local");
  const Tensor diff = graph.Sub(c1, c2);
  const Tensor l2 = graph.Sum(graph.Mul(diff, diff));
  return graph.Add(l2, JensenShannonOp(graph, c1, c2));
}

Tensor LossStyle(Graph& graph, const Tensor& logits, const Lambdas& lambdas) {
  if (logits.rank() != 2 || logits.dim(0) != AdaptationBatch::kNumImages) {
    throw Error("loss_style: expected logits for 11 images, got " + ShapeToString(logits.shape()));
  }
  const std::size_t k = logits.dim(1);
  const auto y = logits.data();
  constexpr std::size_t kPairs = 2 * kGroupSize;
  // residual[pair][c] and its norm
  std::vector<double> residual(kPairs * k);
  std::array<double, kPairs> norms{};
  double total = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < kGroupSize; ++j) {
      const std::size_t pair = i * kGroupSize + j;
      const double* yt = &y[0];
      const double* yti = &y[(1 + i) * k];
      const double* yij = &y[(3 + pair) * k];
      double ss = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        // Same affine blend as (1-l)*yt + l*yti, written so equal rows cancel exactly.
        const double d = yt[c] + lambdas[j] * (yti[c] - yt[c]) - yij[c];
        residual[pair * k + c] = d;
        ss += d * d;
      }
      norms[pair] = std::sqrt(ss);
      total += norms[pair];
    }
  }
  const double inv = 1.0 / static_cast<double>(kPairs);
  return graph.Record(
      "style_consistency", {logits}, Shape{}, {total * inv},
      [=, residual = std::move(residual)](std::span<const double> g, InputGrads grads) {
        if (grads[0].empty()) return;
        auto out = grads[0];
        for (std::size_t i = 0; i < 2; ++i) {
          for (std::size_t j = 0; j < kGroupSize; ++j) {
            const std::size_t pair = i * kGroupSize + j;
            if (norms[pair] == 0.0) continue;
            const double lam = lambdas[j];
            for (std::size_t c = 0; c < k; ++c) {
              const double unit = g[0] * inv * residual[pair * k + c] / norms[pair];
              out[c] += (1.0 - lam) * unit;
              out[(1 + i) * k + c] += lam * unit;
              out[(3 + pair) * k + c] -= unit;
            }
          }
        }
      });
}

TotalLoss CombineLosses(Graph& graph, const Tensor& global, const Tensor& local,
                        const Tensor& style, const LossWeights& weights) {
  if (weights.global < 0.0 || weights.local < 0.0 || weights.style < 0.0) {
    throw Error("loss weights must be nonnegative");
  }
  TotalLoss out;
  out.breakdown.weights = weights;
  out.breakdown.global = global.item();
  out.breakdown.local = local.defined() ? local.item() : 0.0;
  out.breakdown.style = style.item();
  out.breakdown.total = weights.global * out.breakdown.global +
                        weights.local * out.breakdown.local +
                        weights.style * out.breakdown.style;
  Tensor value = graph.Add(graph.ScalarMul(global, weights.global),
                           graph.ScalarMul(style, weights.style));
  if (local.defined()) value = graph.Add(value, graph.ScalarMul(local, weights.local));
  out.value = value;
  return out;
}

}  // namespace ftta
