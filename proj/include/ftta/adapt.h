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

#ifndef FTTA_ADAPT_H_
#define FTTA_ADAPT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ftta/classifier.h"
#include "ftta/consistency.h"
#include "ftta/data_io.h"
#include "ftta/style_bank.h"

namespace ftta {

enum class AdaptMode { kEpisodic, kOnline };

std::string ToString(AdaptMode mode);
AdaptMode ParseAdaptMode(const std::string& text);

struct AdaptationConfig {
  double lr = 5e-3;
  Lambdas lambdas = kDefaultLambdas;
  double beta = 0.1;
  std::size_t k = 5;
  LossWeights weights;
  AdaptMode mode = AdaptMode::kOnline;
  std::uint64_t seed = 0;
  // Coefficient used for the two source-styled views x_t1 and x_t2.
  double source_lambda = 1.0;
  // false: input adaptation only, no gradient step.
  bool update = true;

  // Throws on out-of-range values.
  void Validate() const;
};

struct TrainConfig {
  std::size_t epochs = 16;
  std::size_t batch_size = 32;
  double lr = 2e-3;
  double weight_decay = 1e-2;
  std::uint64_t seed = 0;
  // Augmentation.
  double flip_prob = 0.0;
  double max_rotation_deg = 10.0;
  double contrast_min = 0.8;  // pixel exponent range
  double contrast_max = 1.25;
};

struct TrainReport {
  std::vector<double> train_loss;    // mean cross-entropy per epoch
  std::vector<double> val_accuracy;  // per epoch
  double best_val_accuracy = 0.0;
  std::size_t best_epoch = 0;  // 0 = initialization
};

// Cross-entropy training with AdamW and flip/rotate/contrast augmentation.
// `model` ends up holding the parameters with the best validation accuracy
// (the initialization when epochs == 0).
TrainReport TrainSource(MicroCnn& model, const LabeledImageSet& train,
                        const LabeledImageSet& val, const TrainConfig& config);

double Accuracy(const MicroCnn& model, std::span<const Grid> images, std::span<const int> labels);
std::vector<int> PredictLabels(const MicroCnn& model, std::span<const Grid> images);

// x_t1/x_t2 at config.source_lambda and the two interpolation groups.
AdaptationBatch BuildAdaptationBatch(const Grid& x_t, const Grid& style_a, const Grid& style_b,
                                     const LowPassMask& mask, const AdaptationConfig& config);

struct AdaptationLoss {
  ForwardOutput forward;  // the batched pass over AdaptationBatch::Images()
  TotalLoss total;
  int baseline_prediction = 0;
  int ia_prediction = 0;
  int cam_class = 0;
};

// Records the batched forward pass and the weighted multi-level loss for one
// adaptation batch in `graph`. Nothing is updated.
AdaptationLoss BuildAdaptationLoss(Graph& graph, const MicroCnn& model,
                                   const ConsistencyWeights& weights,
                                   const AdaptationBatch& batch, const AdaptationConfig& config);

struct AdaptResult {
  int baseline_prediction = 0;  // from x_t, before any adaptation
  int ia_prediction = 0;        // mean logits of x_t1, x_t2 before the update
  int prediction = 0;           // mean logits of x_t1, x_t2 after the update
  int cam_class = 0;
  LossBreakdown loss;
  int adaptation_images = 0;  // images in the batched adaptation forward pass
  int prediction_images = 0;  // images re-evaluated for the final prediction
  int backward_passes = 0;
};

// One FTTA step for a single test image: batched forward over the 11 images,
// multi-level consistency loss, one SGD step on the model and on (u, v), and
// the averaged post-update prediction.
AdaptResult AdaptSingle(MicroCnn& model, ConsistencyWeights& weights, const Grid& x_t,
                        const Grid& style_a, const Grid& style_b, const LowPassMask& mask,
                        const AdaptationConfig& config);

struct Metrics {
  bool defined = false;
  double accuracy = 0.0;
  double precision = 0.0;  // macro
  double recall = 0.0;     // macro
  double f1 = 0.0;         // macro
};

// Macro averages run over classes that occur among the labels or predictions.
Metrics ComputeMetrics(std::span<const int> labels, std::span<const int> predictions);

struct ImageRecord {
  std::size_t image_id = 0;
  int label = 0;
  int baseline_prediction = 0;
  int ia_prediction = 0;
  int prediction = 0;
  LossBreakdown loss;
};

struct StreamReport {
  AdaptationConfig config;
  std::vector<ImageRecord> records;
  Metrics baseline;
  Metrics input_adaptation;
  Metrics adapted;
  long adaptation_images = 0;
  long backward_passes = 0;

  void RecomputeMetrics();
};

// Adapts over the stream in order. Episodic mode restores the source
// parameters and resets (u, v) before every image; online mode carries both.
// `source` itself is never modified.
StreamReport RunStream(const MicroCnn& source, const LabeledImageSet& test, const StyleBank& bank,
                       const AdaptationConfig& config);

// --- Report files ------------------------------------------------------------

void WriteReportCsv(const StreamReport& report, const std::filesystem::path& path);
std::vector<ImageRecord> ReadReportCsv(const std::filesystem::path& path);
void WriteReportJson(const StreamReport& report, const std::filesystem::path& path);

}  // namespace ftta

#endif  // FTTA_ADAPT_H_
