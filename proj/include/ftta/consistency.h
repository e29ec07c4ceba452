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

#ifndef FTTA_CONSISTENCY_H_
#define FTTA_CONSISTENCY_H_

#include <array>
#include <span>
#include <string>

#include "ftta/spectral.h"
#include "ftta/tensor.h"

namespace ftta {

inline constexpr std::size_t kGroupSize = 4;
inline constexpr double kCosineEpsilon = 1e-8;
inline constexpr double kJsEpsilon = 1e-12;

using Lambdas = std::array<double, kGroupSize>;
inline constexpr Lambdas kDefaultLambdas = {0.2, 0.4, 0.6, 0.8};

// Learnable integration logits for the two interpolation groups.
struct ConsistencyWeights {
  Tensor u;  // [4], group 1
  Tensor v;  // [4], group 2

  static ConsistencyWeights Zeros();
  void Reset();
};

// One test image, its two source-styled versions, and two groups of four
// style-interpolated images (group i uses style i at coefficient lambdas[j]).
struct AdaptationBatch {
  Grid x_t;
  Grid x_t1;
  Grid x_t2;
  std::array<std::array<Grid, kGroupSize>, 2> groups;
  Lambdas lambdas = kDefaultLambdas;

  // Row order used for the batched forward pass:
  // x_t, x_t1, x_t2, group 1 (lambda 1..4), group 2 (lambda 1..4).
  static constexpr std::size_t kNumImages = 3 + 2 * kGroupSize;
  std::array<Grid, kNumImages> Images() const;
};

struct LossFlags {
  bool zero_norm_feature = false;
  bool degenerate_cam = false;
  bool local_skipped = false;
  bool log_saturated = false;

  bool any() const { return zero_norm_feature || degenerate_cam || local_skipped || log_saturated; }
  // "|"-separated flag names, or "-" when no flag is set.
  std::string ToString() const;
};

struct LossWeights {
  double global = 1.0;
  double local = 1.0;
  double style = 1.0;
};

struct LossBreakdown {
  double global = 0.0;
  double local = 0.0;
  double style = 0.0;
  double total = 0.0;
  LossWeights weights;
  LossFlags flags;
};

// sum_j softmax(weights)_j * items[j]; differentiable in both.
Tensor IntegrateGroup(Graph& graph, std::span<const Tensor> items, const Tensor& weights);

// Mean squared difference plus (1 - cosine similarity). The cosine divides by
// max(|f1||f2|, 1e-8); a zero-norm input contributes 1 and sets the flag.
Tensor LossGlobal(Graph& graph, const Tensor& f1, const Tensor& f2, LossFlags* flags = nullptr);

// Sum of squared differences plus Jensen-Shannon divergence (natural log,
// 1e-12 inside the logs) between two normalized maps.
Tensor LossLocal(Graph& graph, const Tensor& c1, const Tensor& c2);

// Mean over the 8 (group, lambda) pairs of the euclidean norm of
//   (1 - lambda_j) y(x_t) + lambda_j y(x_ti) - y(x_ij),
// with `logits` laid out in AdaptationBatch::Images() order.
Tensor LossStyle(Graph& graph, const Tensor& logits, const Lambdas& lambdas);

// Weighted sum of the three components. `local` may be undefined when the
// local term was skipped.
struct TotalLoss {
  Tensor value;
  LossBreakdown breakdown;
};
TotalLoss CombineLosses(Graph& graph, const Tensor& global, const Tensor& local,
                        const Tensor& style, const LossWeights& weights);

// Value-only helpers used by reports and reference checks.
double JensenShannon(std::span<const double> p, std::span<const double> q);

}  // namespace ftta

#endif  // FTTA_CONSISTENCY_H_
