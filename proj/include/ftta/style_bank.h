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

#ifndef FTTA_STYLE_BANK_H_
#define FTTA_STYLE_BANK_H_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ftta/classifier.h"
#include "ftta/spectral.h"

namespace ftta {

struct StyleEntry {
  int style_id = 0;
  Grid amplitude;             // low-band amplitude, zero outside the mask
  std::optional<double> score;  // restyled validation accuracy in [0, 1]
  std::string source;         // where the style came from, e.g. "train:17"
};

using StylePair = std::pair<int, int>;

struct StyleBank {
  std::vector<StyleEntry> entries;
  double beta = 0.1;
  std::size_t k = 0;
  std::optional<StylePair> chosen_pair;

  bool scored() const;
  const StyleEntry& entry(int style_id) const;
  LowPassMask mask() const;
};

// One entry per image; ids are positions in `images`.
StyleBank BuildBank(std::span<const Grid> images, double beta,
                    std::span<const std::string> sources = {});

// Scores every style by the accuracy of `model` on the validation set after
// restyling it into that style with lambda = 1. Styles are scored on up to
// `threads` worker threads; results do not depend on the thread count.
void ScoreStyles(StyleBank& bank, const MicroCnn& model, std::span<const Grid> images,
                 std::span<const int> labels, std::size_t threads = 1);

// Accuracy of `model` on images restyled with `style` at `lambda`.
double RestyledAccuracy(const MicroCnn& model, std::span<const Grid> images,
                        std::span<const int> labels, const Grid& style, double lambda,
                        const LowPassMask& mask);

// Among all pairs of the top-k styles by score (ties broken by id), the pair
// with the largest masked L2 amplitude distance; ties go to the
// lexicographically smallest id pair. Also records k and the pair in `bank`.
StylePair SelectPair(StyleBank& bank, std::size_t k);

// Directory layout: index.json plus one tensor file per style.
void SaveBank(const StyleBank& bank, const std::filesystem::path& dir);
StyleBank LoadBank(const std::filesystem::path& dir);

}  // namespace ftta

#endif  // FTTA_STYLE_BANK_H_
