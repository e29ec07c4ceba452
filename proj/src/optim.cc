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

#include "ftta/optim.h"

#include <cmath>

namespace ftta {

void ZeroGrads(ParameterList& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

void SgdStep(ParameterList& params, double lr) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw Error("sgd_step: parameter '" + p.name + "' has no gradient");
  }
  for (auto& p : params) {
    auto values = p.tensor.mutable_data();
    const auto grad = p.tensor.grad();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * grad[i];
    p.tensor.zero_grad();
  }
}

AdamW::AdamW(const ParameterList& params, Options options) : options_(options) {
  for (const auto& p : params) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::Step(ParameterList& params) {
  if (params.size() != m_.size()) throw Error("AdamW: parameter list changed size");
  ++step_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& t = params[k].tensor;
    if (!t.has_grad()) continue;
    auto values = t.mutable_data();
    const auto grad = t.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * grad[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * grad[i] * grad[i];
      values[i] -= options_.lr * options_.weight_decay * values[i];
      values[i] -= options_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
    }
    t.zero_grad();
  }
}

}  // namespace ftta
