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

#ifndef FTTA_TENSOR_H_
#define FTTA_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ftta/errors.h"

namespace ftta {

std::size_t NumElements(const Shape& shape);

// Dense row-major f64 array. Copies share storage (handle semantics, like
// the tensors of most autodiff frameworks); use Clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor Scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);

  // Gradient buffer; empty span until a backward pass has touched it.
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // -1 for leaves; otherwise the index of the producing node in its graph.
  int node_id() const;
  std::uint64_t graph_id() const;

  // Deep copy of shape and values, detached from any graph.
  Tensor Clone() const;

  bool defined() const { return impl_ != nullptr; }
  bool SameStorage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class Graph;
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Gradient buffers handed to a node's backward function, one per input.
// An empty span means that input does not need a gradient.
using InputGrads = std::span<const std::span<double>>;
using BackwardFn =
    std::function<void(std::span<const double> grad_out, InputGrads input_grads)>;

enum class GradMode { kEnabled, kDisabled };

// Dynamic reverse-mode tape. Every op appends one node; Backward visits the
// nodes in exact reverse insertion order. A graph and the tensors it produces
// belong to a single thread.
class Graph {
 public:
  explicit Graph(GradMode mode = GradMode::kEnabled);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }
  bool grad_enabled() const { return mode_ == GradMode::kEnabled; }
  const std::string& op_kind(std::size_t node) const { return nodes_.at(node).kind; }
  const std::vector<int>& op_inputs(std::size_t node) const { return nodes_.at(node).input_ids; }

  // Set when log() clamped a nonpositive argument to 1e-12.
  bool log_saturated() const { return log_saturated_; }

  // Accumulates dLoss/dLeaf into every requires_grad leaf reachable from
  // `loss`. Intermediate gradients are recomputed from zero on each call.
  void Backward(const Tensor& loss);

  // Like Backward but leaves parameter gradients untouched; afterwards every
  // intermediate tensor of this graph holds dOutput/dTensor.
  void BackwardIntermediates(const Tensor& output);

  // Appends a node whose output is `out`. Used by the built-in ops and by
  // modules that define fused differentiable ops.
  Tensor Record(std::string kind, std::vector<Tensor> inputs, Shape out_shape,
                std::vector<double> out_values, BackwardFn backward);

  // --- Layers -------------------------------------------------------------
  Tensor Conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                std::size_t stride, std::size_t padding);
  Tensor Dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

  // --- Elementwise --------------------------------------------------------
  Tensor Relu(const Tensor& x);
  Tensor Log(const Tensor& x);
  Tensor Exp(const Tensor& x);
  Tensor Sqrt(const Tensor& x);
  Tensor Add(const Tensor& a, const Tensor& b);
  Tensor Sub(const Tensor& a, const Tensor& b);
  Tensor Mul(const Tensor& a, const Tensor& b);
  Tensor Div(const Tensor& a, const Tensor& b);
  Tensor ScalarMul(const Tensor& x, double factor);
  Tensor AddScalar(const Tensor& x, double offset);
  // x scaled by a one-element tensor; differentiable in both.
  Tensor Scale(const Tensor& x, const Tensor& factor);

  // --- Reductions ---------------------------------------------------------
  Tensor Mean(const Tensor& x);
  Tensor Sum(const Tensor& x);
  Tensor Max(const Tensor& x);
  Tensor GlobalAvgPool(const Tensor& x);  // [N,C,H,W] -> [N,C]
  Tensor MaxPool2x2(const Tensor& x);     // [N,C,H,W] -> [N,C,H/2,W/2]
  Tensor SumRows(const Tensor& x);        // [N,D] -> [N]

  // --- Shape plumbing -----------------------------------------------------
  Tensor Reshape(const Tensor& x, Shape shape);
  Tensor Row(const Tensor& x, std::size_t index);  // [N,...] -> [...]
  Tensor Stack(std::span<const Tensor> items);     // k x [...] -> [k,...]

  // --- Composite ----------------------------------------------------------
  Tensor Softmax(const Tensor& logits);  // 1-D
  // Mean cross-entropy of row-wise logits [N,K] against class labels.
  Tensor CrossEntropy(const Tensor& logits, std::span<const int> labels);
  // [N,C,H,W] x [C] -> [N,H*W]: out[n,p] = sum_c w[c]*x[n,c,p].
  Tensor ChannelWeightedSum(const Tensor& x, const Tensor& weights);
  // Each row divided by max(row sum, eps). Rows summing to exactly zero become
  // uniform and carry no gradient; `degenerate` (if given) receives a flag
  // per row.
  Tensor NormalizeRows(const Tensor& x, double eps, std::vector<bool>* degenerate = nullptr);

 private:
  struct Node {
    std::string kind;
    std::vector<Tensor> inputs;
    std::vector<int> input_ids;  // -1 for leaves
    Tensor output;
    BackwardFn backward;
  };

  bool IsOwnNode(const Tensor& t) const;
  void RunBackward(const Tensor& root, bool accumulate_leaves);

  GradMode mode_;
  std::uint64_t id_;
  std::vector<Node> nodes_;
  bool log_saturated_ = false;
};

}  // namespace ftta

#endif  // FTTA_TENSOR_H_
