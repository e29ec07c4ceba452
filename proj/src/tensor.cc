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

#include "ftta/tensor.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace ftta {

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

ShapeError::ShapeError(const std::string& op, Shape lhs, Shape rhs)
    : Error(op + ": shape mismatch " + ShapeToString(lhs) + " vs " + ShapeToString(rhs)),
      lhs_(std::move(lhs)),
      rhs_(std::move(rhs)) {}

std::size_t NumElements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<std::size_t>());
}

struct Tensor::Impl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  int node_id = -1;
  std::uint64_t graph_id = 0;
};

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw Error("tensor extents must be positive: " + ShapeToString(shape));
  }
  impl_->data.assign(NumElements(shape), fill);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw Error("tensor extents must be positive: " + ShapeToString(shape));
  }
  if (NumElements(shape) != values.size()) {
    throw ShapeError("Tensor", shape, Shape{values.size()});
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->data.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw Error("axis " + std::to_string(axis) + " out of range for " +
                ShapeToString(impl_->shape));
  }
  return impl_->shape[axis];
}

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw Error("item() on non-scalar tensor " + ShapeToString(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

int Tensor::node_id() const { return impl_->node_id; }
std::uint64_t Tensor::graph_id() const { return impl_->graph_id; }

Tensor Tensor::Clone() const {
  Tensor out(impl_->shape, impl_->data, impl_->requires_grad);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::atomic<std::uint64_t> next_graph_id{1};

constexpr double kLogFloor = 1e-12;

void RequireSameShape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

void RequireRank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw Error(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                ShapeToString(t.shape()));
  }
}

// Output columns ox for which ix = ox*stride + k - pad lies inside [0, extent).
std::pair<std::size_t, std::size_t> ValidRange(std::size_t out_extent, std::size_t extent,
                                               std::size_t stride, std::size_t k,
                                               std::size_t pad) {
  std::size_t lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  // ox*stride + k - pad <= extent - 1  <=>  ox <= (extent - 1 + pad - k) / stride
  if (extent + pad < k + 1) return {0, 0};
  std::size_t hi = (extent - 1 + pad - k) / stride + 1;
  hi = std::min(hi, out_extent);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

}  // namespace

Graph::Graph(GradMode mode) : mode_(mode), id_(next_graph_id.fetch_add(1)) {}

bool Graph::IsOwnNode(const Tensor& t) const {
  return t.impl_->graph_id == id_ && t.impl_->node_id >= 0;
}

Tensor Graph::Record(std::string kind, std::vector<Tensor> inputs, Shape out_shape,
                     std::vector<double> out_values, BackwardFn backward) {
  Tensor out(std::move(out_shape), std::move(out_values));
  if (mode_ == GradMode::kDisabled) return out;
  Node node;
  node.kind = std::move(kind);
  node.input_ids.reserve(inputs.size());
  for (const Tensor& in : inputs) {
    node.input_ids.push_back(IsOwnNode(in) ? in.node_id() : -1);
  }
  node.inputs = std::move(inputs);
  out.impl_->node_id = static_cast<int>(nodes_.size());
  out.impl_->graph_id = id_;
  node.output = out;
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return out;
}

void Graph::Backward(const Tensor& loss) { RunBackward(loss, true); }
void Graph::BackwardIntermediates(const Tensor& output) { RunBackward(output, false); }

void Graph::RunBackward(const Tensor& root, bool accumulate_leaves) {
  if (!root.defined() || root.numel() != 1) {
    throw Error("backward requires a scalar loss, got " +
                (root.defined() ? ShapeToString(root.shape()) : std::string("undefined")));
  }
  if (!IsOwnNode(root)) {
    if (root.requires_grad() && accumulate_leaves) {
      Tensor leaf = root;
      leaf.mutable_grad()[0] += 1.0;
      return;
    }
    throw Error("backward: loss is not produced by this graph");
  }
  for (Node& node : nodes_) {
    auto& g = node.output.impl_->grad;
    g.assign(node.output.numel(), 0.0);
  }
  root.impl_->grad[0] = 1.0;

  std::vector<std::span<double>> spans;
  for (int i = root.node_id(); i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    const auto& g_out = node.output.impl_->grad;
    if (std::all_of(g_out.begin(), g_out.end(), [](double v) { return v == 0.0; })) continue;
    spans.clear();
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      Tensor& in = node.inputs[k];
      if (node.input_ids[k] >= 0) {
        spans.emplace_back(in.impl_->grad);
      } else if (accumulate_leaves && in.requires_grad()) {
        spans.push_back(in.mutable_grad());
      } else {
        spans.emplace_back();
      }
    }
    node.backward(g_out, spans);
  }
}

// --- Layers ----------------------------------------------------------------

Tensor Graph::Conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     std::size_t stride, std::size_t padding) {
  RequireRank("conv2d input", input, 4);
  RequireRank("conv2d kernel", kernel, 4);
  if (stride == 0) throw Error("conv2d: stride must be positive");
  const std::size_t n_batch = input.dim(0), chans = input.dim(1), height = input.dim(2),
                    width = input.dim(3);
  const std::size_t filters = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != chans) throw ShapeError("conv2d", input.shape(), kernel.shape());
  if (bias.shape() != Shape{filters}) throw ShapeError("conv2d bias", kernel.shape(), bias.shape());
  if (kh > height + 2 * padding || kw > width + 2 * padding) {
    throw ShapeError("conv2d", input.shape(), kernel.shape());
  }
  const std::size_t out_h = (height + 2 * padding - kh) / stride + 1;
  const std::size_t out_w = (width + 2 * padding - kw) / stride + 1;

  std::vector<double> out(n_batch * filters * out_h * out_w);
  const double* x = input.data().data();
  const double* k = kernel.data().data();
  const double* b = bias.data().data();
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t f = 0; f < filters; ++f) {
      double* o = &out[(n * filters + f) * out_h * out_w];
      std::fill(o, o + out_h * out_w, b[f]);
      for (std::size_t c = 0; c < chans; ++c) {
        const double* xc = x + (n * chans + c) * height * width;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          auto [y0, y1] = ValidRange(out_h, height, stride, ky, padding);
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double w = k[((f * chans + c) * kh + ky) * kw + kx];
            auto [x0, x1] = ValidRange(out_w, width, stride, kx, padding);
            for (std::size_t oy = y0; oy < y1; ++oy) {
              const double* xr = xc + (oy * stride + ky - padding) * width;
              double* orow = o + oy * out_w;
              if (stride == 1) {
                const double* xs = xr + kx - padding;
                for (std::size_t ox = x0; ox < x1; ++ox) orow[ox] += w * xs[ox];
              } else {
                for (std::size_t ox = x0; ox < x1; ++ox) {
                  orow[ox] += w * xr[ox * stride + kx - padding];
                }
              }
            }
          }
        }
      }
    }
  }

  return Record(
      "conv2d", {input, kernel, bias}, Shape{n_batch, filters, out_h, out_w}, std::move(out),
      [=](std::span<const double> g, InputGrads grads) {
        const double* x = input.data().data();
        const double* k = kernel.data().data();
        std::span<double> gx = grads[0], gk = grads[1], gb = grads[2];
        for (std::size_t n = 0; n < n_batch; ++n) {
          for (std::size_t f = 0; f < filters; ++f) {
            const double* go = &g[(n * filters + f) * out_h * out_w];
            if (!gb.empty()) {
              double s = 0.0;
              for (std::size_t i = 0; i < out_h * out_w; ++i) s += go[i];
              gb[f] += s;
            }
            for (std::size_t c = 0; c < chans; ++c) {
              const std::size_t plane = (n * chans + c) * height * width;
              for (std::size_t ky = 0; ky < kh; ++ky) {
                auto [y0, y1] = ValidRange(out_h, height, stride, ky, padding);
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const std::size_t widx = ((f * chans + c) * kh + ky) * kw + kx;
                  const double w = k[widx];
                  auto [x0, x1] = ValidRange(out_w, width, stride, kx, padding);
                  double acc = 0.0;
                  for (std::size_t oy = y0; oy < y1; ++oy) {
                    const std::size_t row = plane + (oy * stride + ky - padding) * width;
                    const double* grow = go + oy * out_w;
                    for (std::size_t ox = x0; ox < x1; ++ox) {
                      const std::size_t xi = row + ox * stride + kx - padding;
                      acc += grow[ox] * x[xi];
                      if (!gx.empty()) gx[xi] += w * grow[ox];
                    }
                  }
                  if (!gk.empty()) gk[widx] += acc;
                }
              }
            }
          }
        }
      });
}

Tensor Graph::Dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  RequireRank("dense input", input, 2);
  RequireRank("dense weight", weight, 2);
  const std::size_t rows = input.dim(0), in_dim = input.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in_dim) throw ShapeError("dense", input.shape(), weight.shape());
  if (bias.shape() != Shape{out_dim}) throw ShapeError("dense bias", weight.shape(), bias.shape());
  std::vector<double> out(rows * out_dim);
  const auto x = input.data();
  const auto w = weight.data();
  const auto b = bias.data();
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t k = 0; k < out_dim; ++k) {
      double s = b[k];
      for (std::size_t d = 0; d < in_dim; ++d) s += x[n * in_dim + d] * w[k * in_dim + d];
      out[n * out_dim + k] = s;
    }
  }
  return Record("dense", {input, weight, bias}, Shape{rows, out_dim}, std::move(out),
                [=](std::span<const double> g, InputGrads grads) {
                  const auto x = input.data();
                  const auto w = weight.data();
                  for (std::size_t n = 0; n < rows; ++n) {
                    for (std::size_t k = 0; k < out_dim; ++k) {
                      const double go = g[n * out_dim + k];
                      if (!grads[2].empty()) grads[2][k] += go;
                      for (std::size_t d = 0; d < in_dim; ++d) {
                        if (!grads[0].empty()) grads[0][n * in_dim + d] += go * w[k * in_dim + d];
                        if (!grads[1].empty()) grads[1][k * in_dim + d] += go * x[n * in_dim + d];
                      }
                    }
                  }
                });
}

// --- Elementwise -------------------------------------------------------------

Tensor Graph::Relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto v = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  return Record("relu", {x}, x.shape(), std::move(out),
                [x](std::span<const double> g, InputGrads grads) {
                  if (grads[0].empty()) return;
                  const auto v = x.data();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    if (v[i] > 0.0) grads[0][i] += g[i];
                  }
                });
}

Tensor Graph::Log(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto v = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (v[i] < kLogFloor) {
      log_saturated_ = true;
      out[i] = std::log(kLogFloor);
    } else {
      out[i] = std::log(v[i]);
    }
  }
  return Record("log", {x}, x.shape(), std::move(out),
                [x](std::span<const double> g, InputGrads grads) {
                  if (grads[0].empty()) return;
                  const auto v = x.data();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    if (v[i] >= kLogFloor) grads[0][i] += g[i] / v[i];
                  }
                });
}

Tensor Graph::Exp(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto v = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(v[i]);
  Tensor result = Record("exp", {x}, x.shape(), out, {});
  if (!grad_enabled()) return result;
  nodes_.back().backward = [out = std::move(out)](std::span<const double> g, InputGrads grads) {
    if (grads[0].empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i] * out[i];
  };
  return result;
}

Tensor Graph::Sqrt(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto v = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (v[i] < 0.0) throw Error("sqrt of negative value");
    out[i] = std::sqrt(v[i]);
  }
  Tensor result = Record("sqrt", {x}, x.shape(), out, {});
  if (!grad_enabled()) return result;
  // d sqrt/dx at 0 is taken as 0.
  nodes_.back().backward = [out = std::move(out)](std::span<const double> g, InputGrads grads) {
    if (grads[0].empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (out[i] > 0.0) grads[0][i] += g[i] * 0.5 / out[i];
    }
  };
  return result;
}

namespace {

template <typename F>
std::vector<double> Zip(const Tensor& a, const Tensor& b, F f) {
  std::vector<double> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

Tensor Graph::Add(const Tensor& a, const Tensor& b) {
  RequireSameShape("add", a, b);
  return Record("add", {a, b}, a.shape(), Zip(a, b, std::plus<>()),
                [](std::span<const double> g, InputGrads grads) {
                  for (int k = 0; k < 2; ++k) {
                    if (grads[k].empty()) continue;
                    for (std::size_t i = 0; i < g.size(); ++i) grads[k][i] += g[i];
                  }
                });
}

Tensor Graph::Sub(const Tensor& a, const Tensor& b) {
  RequireSameShape("sub", a, b);
  return Record("sub", {a, b}, a.shape(), Zip(a, b, std::minus<>()),
                [](std::span<const double> g, InputGrads grads) {
                  if (!grads[0].empty()) {
                    for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i];
                  }
                  if (!grads[1].empty()) {
                    for (std::size_t i = 0; i < g.size(); ++i) grads[1][i] -= g[i];
                  }
                });
}

Tensor Graph::Mul(const Tensor& a, const Tensor& b) {
  RequireSameShape("mul", a, b);
  return Record("mul", {a, b}, a.shape(), Zip(a, b, std::multiplies<>()),
                [a, b](std::span<const double> g, InputGrads grads) {
                  const auto x = a.data();
                  const auto y = b.data();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    if (!grads[0].empty()) grads[0][i] += g[i] * y[i];
                    if (!grads[1].empty()) grads[1][i] += g[i] * x[i];
                  }
                });
}

Tensor Graph::Div(const Tensor& a, const Tensor& b) {
  RequireSameShape("div", a, b);
  for (double v : b.data()) {
    if (v == 0.0) throw Error("div: division by zero");
  }
  return Record("div", {a, b}, a.shape(), Zip(a, b, std::divides<>()),
                [a, b](std::span<const double> g, InputGrads grads) {
                  const auto x = a.data();
                  const auto y = b.data();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    if (!grads[0].empty()) grads[0][i] += g[i] / y[i];
                    if (!grads[1].empty()) grads[1][i] -= g[i] * x[i] / (y[i] * y[i]);
                  }
                });
}

Tensor Graph::ScalarMul(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  return Record("scalar_mul", {x}, x.shape(), std::move(out),
                [factor](std::span<const double> g, InputGrads grads) {
                  if (grads[0].empty()) return;
                  for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += factor * g[i];
                });
}

Tensor Graph::AddScalar(const Tensor& x, double offset) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v += offset;
  return Record("add_scalar", {x}, x.shape(), std::move(out),
                [](std::span<const double> g, InputGrads grads) {
                  if (grads[0].empty()) return;
                  for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i];
                });
}

Tensor Graph::Scale(const Tensor& x, const Tensor& factor) {
  if (factor.numel() != 1) throw ShapeError("scale", x.shape(), factor.shape());
  const double f = factor.item();
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= f;
  return Record("scale", {x, factor}, x.shape(), std::move(out),
                [x, f](std::span<const double> g, InputGrads grads) {
                  const auto v = x.data();
                  double acc = 0.0;
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    if (!grads[0].empty()) grads[0][i] += f * g[i];
                    acc += g[i] * v[i];
                  }
                  if (!grads[1].empty()) grads[1][0] += acc;
                });
}

// --- Reductions --------------------------------------------------------------

Tensor Graph::Sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Record("sum", {x}, Shape{}, {s}, [](std::span<const double> g, InputGrads grads) {
    if (grads[0].empty()) return;
    for (double& v : grads[0]) v += g[0];
  });
}

Tensor Graph::Mean(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  return Record("mean", {x}, Shape{}, {s * inv},
                [inv](std::span<const double> g, InputGrads grads) {
                  if (grads[0].empty()) return;
                  for (double& v : grads[0]) v += g[0] * inv;
                });
}

Tensor Graph::Max(const Tensor& x) {
  const auto v = x.data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return Record("max", {x}, Shape{}, {v[best]},
                [best](std::span<const double> g, InputGrads grads) {
                  if (!grads[0].empty()) grads[0][best] += g[0];
                });
}

Tensor Graph::GlobalAvgPool(const Tensor& x) {
  RequireRank("global_avg_pool", x, 4);
  const std::size_t n_batch = x.dim(0), chans = x.dim(1), plane = x.dim(2) * x.dim(3);
  const double inv = 1.0 / static_cast<double>(plane);
  std::vector<double> out(n_batch * chans);
  const auto v = x.data();
  for (std::size_t i = 0; i < n_batch * chans; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < plane; ++p) s += v[i * plane + p];
    out[i] = s * inv;
  }
  return Record("global_avg_pool", {x}, Shape{n_batch, chans}, std::move(out),
                [=](std::span<const double> g, InputGrads grads) {
                  if (grads[0].empty()) return;
                  for (std::size_t i = 0; i < n_batch * chans; ++i) {
                    for (std::size_t p = 0; p < plane; ++p) grads[0][i * plane + p] += g[i] * inv;
                  }
                });
}

Tensor Graph::MaxPool2x2(const Tensor& x) {
  RequireRank("max_pool2x2", x, 4);
  const std::size_t n_batch = x.dim(0), chans = x.dim(1), height = x.dim(2), width = x.dim(3);
  if (height < 2 || width < 2) throw Error("max_pool2x2: input smaller than 2x2");
  const std::size_t oh = height / 2, ow = width / 2;
  std::vector<double> out(n_batch * chans * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const auto v = x.data();
  for (std::size_t nc = 0; nc < n_batch * chans; ++nc) {
    const std::size_t base = nc * height * width;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + (2 * oy) * width + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * oy + dy) * width + 2 * ox + dx;
            if (v[idx] > v[best]) best = idx;
          }
        }
        const std::size_t o = (nc * oh + oy) * ow + ox;
        out[o] = v[best];
        argmax[o] = best;
      }
    }
  }
  return Record("max_pool2x2", {x}, Shape{n_batch, chans, oh, ow}, std::move(out),
                [argmax = std::move(argmax)](std::span<const double> g, InputGrads grads) {
                  if (grads[0].empty()) return;
                  for (std::size_t i = 0; i < g.size(); ++i) grads[0][argmax[i]] += g[i];
                });
}

Tensor Graph::SumRows(const Tensor& x) {
  RequireRank("sum_rows", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(rows, 0.0);
  const auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r] += v[r * cols + c];
  }
  return Record("sum_rows", {x}, Shape{rows}, std::move(out),
                [rows, cols](std::span<const double> g, InputGrads grads) {
                  if (grads[0].empty()) return;
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) grads[0][r * cols + c] += g[r];
                  }
                });
}

// --- Shape plumbing ----------------------------------------------------------

Tensor Graph::Reshape(const Tensor& x, Shape shape) {
  if (NumElements(shape) != x.numel()) throw ShapeError("reshape", x.shape(), shape);
  std::vector<double> out(x.data().begin(), x.data().end());
  return Record("reshape", {x}, std::move(shape), std::move(out),
                [](std::span<const double> g, InputGrads grads) {
                  if (grads[0].empty()) return;
                  for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i];
                });
}

Tensor Graph::Row(const Tensor& x, std::size_t index) {
  if (x.rank() < 1 || index >= x.dim(0)) {
    throw Error("row " + std::to_string(index) + " out of range for " + ShapeToString(x.shape()));
  }
  Shape shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t width = NumElements(shape);
  const auto v = x.data();
  std::vector<double> out(v.begin() + index * width, v.begin() + (index + 1) * width);
  return Record("row", {x}, std::move(shape), std::move(out),
                [index, width](std::span<const double> g, InputGrads grads) {
                  if (grads[0].empty()) return;
                  for (std::size_t i = 0; i < width; ++i) grads[0][index * width + i] += g[i];
                });
}

Tensor Graph::Stack(std::span<const Tensor> items) {
  if (items.empty()) throw Error("stack: no items");
  const Shape& item_shape = items[0].shape();
  const std::size_t width = items[0].numel();
  std::vector<double> out;
  out.reserve(items.size() * width);
  for (const Tensor& t : items) {
    if (t.shape() != item_shape) throw ShapeError("stack", item_shape, t.shape());
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  Shape shape{items.size()};
  shape.insert(shape.end(), item_shape.begin(), item_shape.end());
  return Record("stack", std::vector<Tensor>(items.begin(), items.end()), std::move(shape),
                std::move(out), [width](std::span<const double> g, InputGrads grads) {
                  for (std::size_t k = 0; k < grads.size(); ++k) {
                    if (grads[k].empty()) continue;
                    for (std::size_t i = 0; i < width; ++i) grads[k][i] += g[k * width + i];
                  }
                });
}

// --- Composite ---------------------------------------------------------------

Tensor Graph::Softmax(const Tensor& logits) {
  RequireRank("softmax", logits, 1);
  const auto v = logits.data();
  const double peak = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    total += out[i];
  }
  for (double& p : out) p /= total;
  Tensor result = Record("softmax", {logits}, logits.shape(), out, {});
  if (!grad_enabled()) return result;
  nodes_.back().backward = [p = std::move(out)](std::span<const double> g, InputGrads grads) {
    if (grads[0].empty()) return;
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * p[i];
    for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += p[i] * (g[i] - dot);
  };
  return result;
}

Tensor Graph::CrossEntropy(const Tensor& logits, std::span<const int> labels) {
  RequireRank("cross_entropy", logits, 2);
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != rows) throw ShapeError("cross_entropy", logits.shape(), Shape{labels.size()});
  const auto v = logits.data();
  std::vector<double> probs(rows * classes);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw Error("cross_entropy: label " + std::to_string(labels[r]) + " out of range");
    }
    const double* row = &v[r * classes];
    const double peak = *std::max_element(row, row + classes);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[r * classes + c] = std::exp(row[c] - peak);
      total += probs[r * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= total;
    loss -= row[labels[r]] - peak - std::log(total);
  }
  const double inv = 1.0 / static_cast<double>(rows);
  std::vector<int> targets(labels.begin(), labels.end());
  return Record("cross_entropy", {logits}, Shape{}, {loss * inv},
                [=, probs = std::move(probs)](std::span<const double> g, InputGrads grads) {
                  if (grads[0].empty()) return;
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < classes; ++c) {
                      const double onehot = static_cast<int>(c) == targets[r] ? 1.0 : 0.0;
                      grads[0][r * classes + c] += g[0] * inv * (probs[r * classes + c] - onehot);
                    }
                  }
                });
}

Tensor Graph::ChannelWeightedSum(const Tensor& x, const Tensor& weights) {
  RequireRank("channel_weighted_sum", x, 4);
  const std::size_t n_batch = x.dim(0), chans = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (weights.shape() != Shape{chans}) {
    throw ShapeError("channel_weighted_sum", x.shape(), weights.shape());
  }
  std::vector<double> out(n_batch * plane, 0.0);
  const auto v = x.data();
  const auto w = weights.data();
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t c = 0; c < chans; ++c) {
      const double* src = &v[(n * chans + c) * plane];
      double* dst = &out[n * plane];
      for (std::size_t p = 0; p < plane; ++p) dst[p] += w[c] * src[p];
    }
  }
  return Record("channel_weighted_sum", {x, weights}, Shape{n_batch, plane}, std::move(out),
                [=](std::span<const double> g, InputGrads grads) {
                  const auto v = x.data();
                  const auto w = weights.data();
                  for (std::size_t n = 0; n < n_batch; ++n) {
                    for (std::size_t c = 0; c < chans; ++c) {
                      const std::size_t base = (n * chans + c) * plane;
                      double acc = 0.0;
                      for (std::size_t p = 0; p < plane; ++p) {
                        const double go = g[n * plane + p];
                        if (!grads[0].empty()) grads[0][base + p] += w[c] * go;
                        acc += go * v[base + p];
                      }
                      if (!grads[1].empty()) grads[1][c] += acc;
                    }
                  }
                });
}

Tensor Graph::NormalizeRows(const Tensor& x, double eps, std::vector<bool>* degenerate) {
  RequireRank("normalize_rows", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const auto v = x.data();
  std::vector<double> out(rows * cols);
  std::vector<double> denom(rows);
  std::vector<bool> flags(rows, false);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += v[r * cols + c];
    if (s == 0.0) {
      flags[r] = true;
      std::fill(&out[r * cols], &out[r * cols] + cols, 1.0 / static_cast<double>(cols));
      continue;
    }
    // The epsilon floors the divisor so rows above it sum to exactly one.
    denom[r] = std::max(s, eps);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = v[r * cols + c] / denom[r];
  }
  if (degenerate) *degenerate = flags;
  return Record("normalize_rows", {x}, x.shape(), std::move(out),
                [=](std::span<const double> g, InputGrads grads) {
                  if (grads[0].empty()) return;
                  const auto v = x.data();
                  for (std::size_t r = 0; r < rows; ++r) {
                    if (flags[r]) continue;
                    const double d = denom[r];
                    double dot = 0.0;
                    // A floored divisor is a constant.
                    if (d > eps) {
                      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * v[r * cols + c];
                    }
                    for (std::size_t c = 0; c < cols; ++c) {
                      grads[0][r * cols + c] += g[r * cols + c] / d - dot / (d * d);
                    }
                  }
                });
}

}  // namespace ftta
