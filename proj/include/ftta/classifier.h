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

#ifndef FTTA_CLASSIFIER_H_
#define FTTA_CLASSIFIER_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ftta/optim.h"
#include "ftta/spectral.h"
#include "ftta/tensor.h"

namespace ftta {

struct ModelInfo {
  std::size_t num_classes = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint64_t seed = 0;
};

// Activations of one forward pass, all living in the caller's graph.
struct ForwardOutput {
  Tensor logits;     // [N, K]
  Tensor features;   // [N, 32], global average pool of the last block
  Tensor last_conv;  // [N, 32, h, w], rectified last convolution before pooling
};

struct CamMap {
  Grid grid;  // last-conv spatial resolution
  bool normalized = false;
  bool degenerate = false;
};

inline constexpr double kCamEpsilon = 1e-8;

// Three conv3x3-relu-maxpool blocks (8/16/32 channels), global average pool
// and a dense head. Single-channel input.
class MicroCnn {
 public:
  static constexpr std::size_t kFeatureDim = 32;
  static constexpr std::size_t kMinExtent = 8;

  MicroCnn(std::size_t num_classes, std::size_t height, std::size_t width, std::uint64_t seed);

  const ModelInfo& info() const { return info_; }
  std::size_t num_classes() const { return info_.num_classes; }

  ParameterList& parameters() { return params_; }
  const ParameterList& parameters() const { return params_; }
  Tensor& parameter(const std::string& name);
  const Tensor& head_weight() const { return params_[6].tensor; }

  ForwardOutput Forward(Graph& graph, const Tensor& batch) const;

  // Deep copy with independent parameter storage.
  MicroCnn Clone() const;
  // Overwrites parameter values (not gradients) with those of `other`.
  void CopyValuesFrom(const MicroCnn& other);

  void Save(const std::filesystem::path& checkpoint) const;
  static MicroCnn Load(const std::filesystem::path& checkpoint);

 private:
  MicroCnn() = default;

  ModelInfo info_;
  ParameterList params_;
};

// Stacks single-channel images into a [N, 1, H, W] tensor.
Tensor MakeBatch(std::span<const Grid> images);

// Logits for a batch, without recording a graph.
Tensor Predict(const MicroCnn& model, const Tensor& batch);
Tensor Features(const MicroCnn& model, const Tensor& batch);
std::vector<int> ArgmaxRows(const Tensor& logits);

// Grad-CAM: channel weights are the spatial mean of dlogit[class]/dlast_conv,
// obtained by a backward pass through a fresh graph.
CamMap GradCam(const MicroCnn& model, const Tensor& image, std::size_t class_index);

// Differentiable Grad-CAM for every row of `out`, as normalized rows [N, h*w].
// Uses the closed form of dlogit/dlast_conv for the pooled dense head.
Tensor CamGraph(Graph& graph, const MicroCnn& model, const ForwardOutput& out,
                std::size_t class_index, std::vector<bool>* degenerate = nullptr);

}  // namespace ftta

#endif  // FTTA_CLASSIFIER_H_
