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


#include "ftta/adapt.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "test_util.h"

namespace ftta {
namespace {

namespace fs = std::filesystem;
using testing::RandomGrid;

constexpr std::size_t kSize = 16;

std::vector<double> ParameterValues(const MicroCnn& model) {
  std::vector<double> out;
  for (const auto& p : model.parameters()) out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

// Two random test images with styles taken from two other random images.
struct Scene {
  Grid x;
  Grid style_a, style_b;
  LowPassMask mask;
};

Scene MakeScene(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Scene s{RandomGrid(kSize, kSize, rng), {}, {}, MakeMask(kSize, kSize, 0.1)};
  s.style_a = LowBandAmplitude(RandomGrid(kSize, kSize, rng, 0.0, 0.6), s.mask);
  s.style_b = LowBandAmplitude(RandomGrid(kSize, kSize, rng, 0.4, 1.0), s.mask);
  return s;
}

StyleBank PairBank(const Scene& s) {
  StyleBank bank;
  bank.beta = 0.1;
  bank.entries = {{0, s.style_a, 1.0, "a"}, {1, s.style_b, 1.0, "b"}};
  bank.k = 2;
  bank.chosen_pair = StylePair(0, 1);
  return bank;
}

LabeledImageSet RandomSet(std::size_t n, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LabeledImageSet set;
  for (std::size_t i = 0; i < n; ++i) {
    set.images.push_back(RandomGrid(kSize, kSize, rng));
    set.labels.push_back(static_cast<int>(i % classes));
  }
  return set;
}

TEST(AdaptSingle, OwnStylesAreAFixedPoint) {
  const Scene s = MakeScene(1);
  const Grid own = LowBandAmplitude(s.x, s.mask);
  MicroCnn model(4, kSize, kSize, 2);
  const auto before = ParameterValues(model);
  ConsistencyWeights w = ConsistencyWeights::Zeros();
  const AdaptResult r = AdaptSingle(model, w, s.x, own, own, s.mask, AdaptationConfig{});
  EXPECT_EQ(r.loss.total, 0.0);
  EXPECT_EQ(ParameterValues(model), before);
  for (double v : w.u.data()) EXPECT_EQ(v, 0.0);
  for (double v : w.v.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(r.prediction, r.ia_prediction);
  EXPECT_EQ(r.prediction, r.baseline_prediction);
}

TEST(AdaptSingle, ZeroLearningRateKeepsInputAdaptationPrediction) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene s = MakeScene(10 + seed);
    MicroCnn model(5, kSize, kSize, seed);
    const auto before = ParameterValues(model);
    ConsistencyWeights w = ConsistencyWeights::Zeros();
    AdaptationConfig config;
    config.lr = 0.0;
    const AdaptResult r = AdaptSingle(model, w, s.x, s.style_a, s.style_b, s.mask, config);
    EXPECT_EQ(r.prediction, r.ia_prediction);
    EXPECT_EQ(ParameterValues(model), before);
  }
}

TEST(AdaptSingle, CountsForwardImagesAndBackwardPasses) {
  const Scene s = MakeScene(3);
  MicroCnn model(3, kSize, kSize, 4);
  ConsistencyWeights w = ConsistencyWeights::Zeros();
  const AdaptResult r = AdaptSingle(model, w, s.x, s.style_a, s.style_b, s.mask, AdaptationConfig{});
  EXPECT_EQ(r.adaptation_images, 11);
  EXPECT_EQ(r.prediction_images, 2);
  EXPECT_EQ(r.backward_passes, 1);
  EXPECT_GT(r.loss.total, 0.0);
}

TEST(AdaptSingle, AllWeightsZeroReproducesInputAdaptation) {
  const Scene s = MakeScene(5);
  MicroCnn model(3, kSize, kSize, 6);
  const auto before = ParameterValues(model);
  ConsistencyWeights w = ConsistencyWeights::Zeros();
  AdaptationConfig config;
  config.weights = {0.0, 0.0, 0.0};
  const AdaptResult r = AdaptSingle(model, w, s.x, s.style_a, s.style_b, s.mask, config);
  EXPECT_EQ(r.loss.total, 0.0);
  EXPECT_EQ(r.backward_passes, 0);
  EXPECT_EQ(r.prediction, r.ia_prediction);
  EXPECT_EQ(ParameterValues(model), before);
}

TEST(AdaptSingle, BaselinePredictionUsesRawImage) {
  const Scene s = MakeScene(7);
  MicroCnn model(6, kSize, kSize, 8);
  const int expect = ArgmaxRows(Predict(model, MakeBatch(std::vector<Grid>{s.x})))[0];
  ConsistencyWeights w = ConsistencyWeights::Zeros();
  EXPECT_EQ(AdaptSingle(model, w, s.x, s.style_a, s.style_b, s.mask, AdaptationConfig{}).baseline_prediction,
            expect);
}

// Searches seeds for the first image whose prediction flips after one step and
// pins the whole outcome.
TEST(AdaptSingle, SeededFlipMatchesGolden) {
  AdaptationConfig config;
  config.lr = 0.05;
  nlohmann::json found;
  for (std::uint64_t seed = 0; seed < 200 && found.is_null(); ++seed) {
    const Scene s = MakeScene(1000 + seed);
    MicroCnn model(4, kSize, kSize, seed);
    ConsistencyWeights w = ConsistencyWeights::Zeros();
    const AdaptResult r = AdaptSingle(model, w, s.x, s.style_a, s.style_b, s.mask, config);
    if (r.prediction != r.ia_prediction) {
      found = {{"seed", seed},
               {"baseline", r.baseline_prediction},
               {"ia", r.ia_prediction},
               {"prediction", r.prediction},
               {"loss", {r.loss.global, r.loss.local, r.loss.style, r.loss.total}},
               {"u", std::vector<double>(w.u.data().begin(), w.u.data().end())}};
    }
  }
  ASSERT_FALSE(found.is_null()) << "no flip within 200 seeds";
  const fs::path path = fs::path(FTTA_GOLDEN_DIR) / "adapt_flip.json";
  if (std::getenv("FTTA_UPDATE_GOLDEN")) std::ofstream(path) << found.dump(1);
  std::ifstream in(path);
  ASSERT_TRUE(in) << "missing golden file " << path;
  const auto golden = nlohmann::json::parse(in);
  for (const char* key : {"seed", "baseline", "ia", "prediction"}) EXPECT_EQ(found[key], golden[key]) << key;
  for (const char* key : {"loss", "u"}) {
    const auto a = found[key].get<std::vector<double>>(), b = golden[key].get<std::vector<double>>();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-10) << key << i;
  }
}

TEST(AdaptationConfig, ValidationRejectsBadValues) {
  EXPECT_NO_THROW(AdaptationConfig{}.Validate());
  const auto bad = [](auto mutate) {
    AdaptationConfig c;
    mutate(c);
    EXPECT_THROW(c.Validate(), Error);
  };
  bad([](AdaptationConfig& c) { c.lr = -1e-3; });
  bad([](AdaptationConfig& c) { c.beta = 0.0; });
  bad([](AdaptationConfig& c) { c.beta = 1.0; });
  bad([](AdaptationConfig& c) { c.k = 1; });
  bad([](AdaptationConfig& c) { c.lambdas = {0.2, 0.1, 0.6, 0.8}; });
  bad([](AdaptationConfig& c) { c.lambdas = {0.0, 0.4, 0.6, 0.8}; });
  bad([](AdaptationConfig& c) { c.weights.style = -1.0; });
  bad([](AdaptationConfig& c) { c.source_lambda = 1.5; });
  EXPECT_EQ(ParseAdaptMode("episodic"), AdaptMode::kEpisodic);
  EXPECT_EQ(ToString(AdaptMode::kOnline), "online");
  EXPECT_THROW(ParseAdaptMode("batch"), Error);
}

TEST(ComputeMetrics, HandCases) {
  EXPECT_FALSE(ComputeMetrics({}, {}).defined);
  const std::vector<int> labels = {0, 0, 1, 1, 2};
  const std::vector<int> preds = {0, 1, 1, 1, 0};
  const Metrics m = ComputeMetrics(labels, preds);
  ASSERT_TRUE(m.defined);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.6);
  // Class precisions 1/2, 2/3, 0; recalls 1/2, 1, 0.
  EXPECT_NEAR(m.precision, (0.5 + 2.0 / 3.0) / 3.0, 1e-15);
  EXPECT_NEAR(m.recall, 1.5 / 3.0, 1e-15);
  EXPECT_NEAR(m.f1, (0.5 + 0.8) / 3.0, 1e-15);
  EXPECT_THROW(ComputeMetrics(labels, std::vector<int>{0}), Error);
}

TEST(RunStream, EmptyStreamHasUndefinedMetrics) {
  const Scene s = MakeScene(11);
  const MicroCnn model(3, kSize, kSize, 1);
  LabeledImageSet empty;
  AdaptationConfig config;
  const StreamReport r = RunStream(model, empty, PairBank(s), config);
  EXPECT_TRUE(r.records.empty());
  EXPECT_FALSE(r.baseline.defined);
  EXPECT_FALSE(r.adapted.defined);
}

TEST(RunStream, RejectsBankWithoutPairOrWithOtherBeta) {
  const Scene s = MakeScene(12);
  const MicroCnn model(3, kSize, kSize, 1);
  StyleBank bank = PairBank(s);
  AdaptationConfig config;
  config.beta = 0.2;
  EXPECT_THROW(RunStream(model, RandomSet(2, 3, 1), bank, config), Error);
  bank.chosen_pair.reset();
  EXPECT_THROW(RunStream(model, RandomSet(2, 3, 1), bank, AdaptationConfig{}), Error);
}

TEST(RunStream, EpisodicResultsDoNotDependOnOrder) {
  const Scene s = MakeScene(13);
  const MicroCnn model(4, kSize, kSize, 14);
  const LabeledImageSet test = RandomSet(6, 4, 15);
  AdaptationConfig config;
  config.mode = AdaptMode::kEpisodic;
  const StreamReport forward = RunStream(model, test, PairBank(s), config);
  const std::vector<std::size_t> order = {5, 2, 0, 4, 1, 3};
  const StreamReport shuffled = RunStream(model, test.Subset(order), PairBank(s), config);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const ImageRecord& a = forward.records[order[i]];
    const ImageRecord& b = shuffled.records[i];
    EXPECT_EQ(a.prediction, b.prediction);
    EXPECT_EQ(a.ia_prediction, b.ia_prediction);
    EXPECT_EQ(a.loss.total, b.loss.total);
  }
  EXPECT_EQ(forward.adaptation_images, 66);
  EXPECT_EQ(forward.backward_passes, 6);
}

TEST(RunStream, OnlineCarriesStateAndLeavesSourceUntouched) {
  const Scene s = MakeScene(16);
  const MicroCnn model(4, kSize, kSize, 17);
  const auto before = ParameterValues(model);
  const LabeledImageSet test = RandomSet(4, 4, 18);
  AdaptationConfig online;
  online.lr = 0.05;
  AdaptationConfig episodic = online;
  episodic.mode = AdaptMode::kEpisodic;
  const StreamReport a = RunStream(model, test, PairBank(s), online);
  const StreamReport b = RunStream(model, test, PairBank(s), episodic);
  EXPECT_EQ(a.records[0].loss.total, b.records[0].loss.total);
  EXPECT_NE(a.records[3].loss.total, b.records[3].loss.total);
  EXPECT_EQ(ParameterValues(model), before);
}

TEST(ReportFiles, CsvRoundTripReproducesMetrics) {
  const Scene s = MakeScene(19);
  const MicroCnn model(3, kSize, kSize, 20);
  AdaptationConfig config;
  config.mode = AdaptMode::kEpisodic;
  config.lr = 0.05;
  const StreamReport report = RunStream(model, RandomSet(9, 3, 21), PairBank(s), config);
  const fs::path dir = fs::path(::testing::TempDir()) / "ftta_report";
  fs::create_directories(dir);
  WriteReportCsv(report, dir / "report.csv");
  WriteReportJson(report, dir / "report.json");
  const auto rows = ReadReportCsv(dir / "report.csv");
  ASSERT_EQ(rows.size(), 9u);
  StreamReport reread;
  reread.records = rows;
  reread.RecomputeMetrics();
  EXPECT_NEAR(reread.adapted.accuracy, report.adapted.accuracy, 1e-12);
  EXPECT_NEAR(reread.adapted.f1, report.adapted.f1, 1e-12);
  EXPECT_NEAR(reread.baseline.precision, report.baseline.precision, 1e-12);
  EXPECT_NEAR(reread.input_adaptation.recall, report.input_adaptation.recall, 1e-12);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].image_id, i);
    EXPECT_EQ(rows[i].prediction, report.records[i].prediction);
  }
  std::ifstream in(dir / "report.json");
  EXPECT_NO_THROW(nlohmann::json::parse(in));
}

// Class 0 lights the left half, class 1 the right half.
LabeledImageSet Halves(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  LabeledImageSet set;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    Grid g(kSize, kSize);
    for (std::size_t y = 0; y < kSize; ++y)
      for (std::size_t x = 0; x < kSize; ++x) {
        const bool lit = (x < kSize / 2) == (label == 0);
        g.at(y, x) = std::clamp((lit ? 0.8 : 0.2) + noise(rng), 0.0, 1.0);
      }
    set.images.push_back(std::move(g));
    set.labels.push_back(label);
  }
  return set;
}

TEST(TrainSource, SeparableToyReachesNearPerfectAccuracy) {
  MicroCnn model(2, kSize, kSize, 22);
  TrainConfig config;
  config.epochs = 50;
  config.batch_size = 16;
  const LabeledImageSet val = Halves(100, 24);
  const TrainReport report = TrainSource(model, Halves(64, 23), val, config);
  EXPECT_EQ(report.val_accuracy.size(), 50u);
  EXPECT_GE(report.best_val_accuracy, 0.99);
  EXPECT_GE(Accuracy(model, val.images, val.labels), 0.99);
}

TEST(TrainSource, ZeroEpochsKeepsInitialization) {
  MicroCnn model(2, kSize, kSize, 25);
  const auto before = ParameterValues(model);
  TrainConfig config;
  config.epochs = 0;
  const TrainReport report = TrainSource(model, Halves(8, 1), Halves(8, 2), config);
  EXPECT_EQ(report.best_epoch, 0u);
  EXPECT_EQ(ParameterValues(model), before);
}

std::vector<char> FileBytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(TrainSource, FixedSeedGivesIdenticalCheckpointBytes) {
  const fs::path dir = fs::path(::testing::TempDir()) / "ftta_train_det";
  fs::create_directories(dir);
  TrainConfig config;
  config.epochs = 3;
  config.seed = 9;
  for (const char* name : {"a.ckpt", "b.ckpt"}) {
    MicroCnn model(2, kSize, kSize, 26);
    TrainSource(model, Halves(32, 3), Halves(16, 4), config);
    model.Save(dir / name);
  }
  const auto a = FileBytes(dir / "a.ckpt");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, FileBytes(dir / "b.ckpt"));
}

TEST(TrainSource, RejectsEmptyOrMismatchedData) {
  MicroCnn model(2, kSize, kSize, 27);
  EXPECT_THROW(TrainSource(model, LabeledImageSet{}, Halves(4, 1), TrainConfig{}), Error);
  LabeledImageSet bad = Halves(4, 1);
  bad.labels[0] = 5;
  EXPECT_THROW(TrainSource(model, bad, Halves(4, 2), TrainConfig{}), Error);
}

}  // namespace
}  // namespace ftta
