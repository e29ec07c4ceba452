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

#include "ftta/classifier.h"

#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "ftta/checkpoint.h"

namespace ftta {
namespace {

constexpr std::size_t kWidths[3] = {8, 16, 32};

Tensor HeNormal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t(std::move(shape), 0.0, true);
  for (double& v : t.mutable_data()) v = dist(rng);
  return t;
}

std::filesystem::path SidecarPath(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".json";
  return p;
}

}  // namespace

MicroCnn::MicroCnn(std::size_t num_classes, std::size_t height, std::size_t width,
                   std::uint64_t seed)
    : info_{num_classes, height, width, seed} {
  if (num_classes < 2) throw Error("classifier needs at least 2 classes");
  if (height < kMinExtent || width < kMinExtent) {
    throw Error("classifier input must be at least 8x8");
  }
  std::mt19937_64 rng(seed);
  std::size_t in = 1;
  for (int b = 0; b < 3; ++b) {
    const std::size_t out = kWidths[b];
    const std::string prefix = "conv" + std::to_string(b + 1);
    params_.push_back({prefix + ".weight", HeNormal(Shape{out, in, 3, 3}, in * 9, rng)});
    params_.push_back({prefix + ".bias", Tensor(Shape{out}, 0.0, true)});
    in = out;
  }
  params_.push_back({"head.weight", HeNormal(Shape{num_classes, kFeatureDim}, kFeatureDim, rng)});
  params_.push_back({"head.bias", Tensor(Shape{num_classes}, 0.0, true)});
}

Tensor& MicroCnn::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw Error("no parameter named '" + name + "'");
}

ForwardOutput MicroCnn::Forward(Graph& graph, const Tensor& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != 1) {
    throw ShapeError("classifier input (expected [N,1,H,W])", batch.shape(),
                     Shape{1, 1, info_.height, info_.width});
  }
  if (batch.dim(2) < kMinExtent || batch.dim(3) < kMinExtent) {
    throw Error("classifier input must be at least 8x8, got " + ShapeToString(batch.shape()));
  }
  ForwardOutput out;
  Tensor x = batch;
  for (int b = 0; b < 3; ++b) {
    Tensor conv = graph.Conv2d(x, params_[2 * b].tensor, params_[2 * b + 1].tensor, 1, 1);
    Tensor act = graph.Relu(conv);
    if (b == 2) out.last_conv = act;
    x = graph.MaxPool2x2(act);
  }
  out.features = graph.GlobalAvgPool(x);
  out.logits = graph.Dense(out.features, params_[6].tensor, params_[7].tensor);
  return out;
}

MicroCnn MicroCnn::Clone() const {
  MicroCnn copy;
  copy.info_ = info_;
  for (const auto& p : params_) {
    Tensor t = p.tensor.Clone();
    t.set_requires_grad(true);
    copy.params_.push_back({p.name, t});
  }
  return copy;
}

void MicroCnn::CopyValuesFrom(const MicroCnn& other) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto src = other.params_.at(i).tensor.data();
    auto dst = params_[i].tensor.mutable_data();
    if (src.size() != dst.size()) {
      throw ShapeError("copy parameters", params_[i].tensor.shape(), other.params_[i].tensor.shape());
    }
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

void MicroCnn::Save(const std::filesystem::path& checkpoint) const {
  WriteTensorFile(checkpoint, params_);
  nlohmann::ordered_json meta;
  meta["num_classes"] = info_.num_classes;
  meta["height"] = info_.height;
  meta["width"] = info_.width;
  meta["seed"] = info_.seed;
  std::ofstream out(SidecarPath(checkpoint));
  if (!out) throw Error("cannot write " + SidecarPath(checkpoint).string());
  out << meta.dump(2) << '\n';
}

MicroCnn MicroCnn::Load(const std::filesystem::path& checkpoint) {
  std::ifstream in(SidecarPath(checkpoint));
  if (!in) throw Error("missing checkpoint metadata " + SidecarPath(checkpoint).string());
  const auto meta = nlohmann::json::parse(in);
  MicroCnn model(meta.at("num_classes").get<std::size_t>(), meta.at("height").get<std::size_t>(),
                 meta.at("width").get<std::size_t>(), meta.at("seed").get<std::uint64_t>());
  const auto tensors = ReadTensorFile(checkpoint);
  for (auto& p : model.params_) {
    const Tensor& stored = FindTensor(tensors, p.name);
    if (stored.shape() != p.tensor.shape()) {
      throw ShapeError("checkpoint " + p.name, p.tensor.shape(), stored.shape());
    }
    std::copy(stored.data().begin(), stored.data().end(), p.tensor.mutable_data().begin());
  }
  return model;
}

Tensor MakeBatch(std::span<const Grid> images) {
  if (images.empty()) throw Error("empty image batch");
  const std::size_t h = images[0].height, w = images[0].width;
  std::vector<double> values;
  values.reserve(images.size() * h * w);
  for (const Grid& g : images) {
    if (g.height != h || g.width != w) {
      throw ShapeError("batch", Shape{h, w}, Shape{g.height, g.width});
    }
    values.insert(values.end(), g.values.begin(), g.values.end());
  }
  return Tensor(Shape{images.size(), 1, h, w}, std::move(values));
}

Tensor Predict(const MicroCnn& model, const Tensor& batch) {
  Graph graph(GradMode::kDisabled);
  return model.Forward(graph, batch).logits;
}

Tensor Features(const MicroCnn& model, const Tensor& batch) {
  Graph graph(GradMode::kDisabled);
  return model.Forward(graph, batch).features;
}

std::vector<int> ArgmaxRows(const Tensor& logits) {
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  std::vector<int> out(rows);
  const auto v = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (v[r * cols + c] > v[r * cols + best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

CamMap GradCam(const MicroCnn& model, const Tensor& image, std::size_t class_index) {
  if (class_index >= model.num_classes()) {
    throw Error("grad_cam: class index " + std::to_string(class_index) + " out of range");
  }
  if (image.rank() != 4 || image.dim(0) != 1) {
    throw ShapeError("grad_cam (expected [1,1,H,W])", image.shape(), Shape{1, 1});
  }
  Graph graph;
  const ForwardOutput out = model.Forward(graph, image);
  const Tensor score = graph.Row(graph.Row(out.logits, 0), class_index);
  graph.BackwardIntermediates(score);

  const std::size_t chans = out.last_conv.dim(1), h = out.last_conv.dim(2),
                    w = out.last_conv.dim(3), plane = h * w;
  const auto act = out.last_conv.data();
  const auto grad = out.last_conv.grad();
  CamMap cam{Grid(h, w)};
  for (std::size_t c = 0; c < chans; ++c) {
    double weight = 0.0;
    for (std::size_t p = 0; p < plane; ++p) weight += grad[c * plane + p];
    weight /= static_cast<double>(plane);
    for (std::size_t p = 0; p < plane; ++p) cam.grid.values[p] += weight * act[c * plane + p];
  }
  double total = 0.0;
  for (double& v : cam.grid.values) {
    v = v > 0.0 ? v : 0.0;
    total += v;
  }
  if (total == 0.0) {
    cam.degenerate = true;
    std::fill(cam.grid.values.begin(), cam.grid.values.end(), 1.0 / static_cast<double>(plane));
  } else {
    for (double& v : cam.grid.values) v /= std::max(total, kCamEpsilon);
  }
  cam.normalized = true;
  return cam;
}

Tensor CamGraph(Graph& graph, const MicroCnn& model, const ForwardOutput& out,
                std::size_t class_index, std::vector<bool>* degenerate) {
  if (class_index >= model.num_classes()) {
    throw Error("grad_cam: class index " + std::to_string(class_index) + " out of range");
  }
  const double plane = static_cast<double>(out.last_conv.dim(2) * out.last_conv.dim(3));
  // Max pooling routes the whole head.weight[k, c] to channel c of the last
  // convolution, so the spatial mean of dlogit[k]/dlast_conv[c] is
  // head.weight[k, c] / plane.
  const Tensor weights = graph.ScalarMul(graph.Row(model.head_weight(), class_index), 1.0 / plane);
  const Tensor raw = graph.Relu(graph.ChannelWeightedSum(out.last_conv, weights));
  return graph.NormalizeRows(raw, kCamEpsilon, degenerate);
}

}  // namespace ftta
