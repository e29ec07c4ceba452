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

#ifndef FTTA_OPTIM_H_
#define FTTA_OPTIM_H_

#include <string>
#include <vector>

#include "ftta/tensor.h"

namespace ftta {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

void ZeroGrads(ParameterList& params);

// p <- p - lr * grad(p), then zeroes the gradients. Throws if any parameter
// has no gradient buffer.
void SgdStep(ParameterList& params, double lr);

// Decoupled weight decay Adam, used for offline source training.
class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
  };

  AdamW(const ParameterList& params, Options options);

  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }

  // Parameters without a gradient are skipped. Zeroes gradients afterwards.
  void Step(ParameterList& params);

 private:
  Options options_;
  long step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace ftta

#endif  // FTTA_OPTIM_H_
