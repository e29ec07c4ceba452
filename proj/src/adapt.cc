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
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "ftta/optim.h"
#include "ftta/run_config.h"

namespace ftta {

std::string ToString(AdaptMode mode) { return mode == AdaptMode::kOnline ? "online" : "episodic"; }

AdaptMode ParseAdaptMode(const std::string& text) {
  if (text == "online") return AdaptMode::kOnline;
  if (text == "episodic") return AdaptMode::kEpisodic;
  throw Error("unknown adaptation mode '" + text + "' (expected online or episodic)");
}

void AdaptationConfig::Validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error("lr must be a finite value >= 0");
  for (std::size_t j = 0; j < lambdas.size(); ++j) {
    if (!(lambdas[j] > 0.0 && lambdas[j] < 1.0)) throw Error("each lambda must lie in (0, 1)");
    if (j > 0 && !(lambdas[j] > lambdas[j - 1])) throw Error("lambdas must be strictly increasing");
  }
  if (!(beta > 0.0 && beta < 1.0)) throw Error("beta must lie in (0, 1)");
  if (k < 2) throw Error("k must be at least 2");
  if (weights.global < 0.0 || weights.local < 0.0 || weights.style < 0.0) {
    throw Error("loss weights must be nonnegative");
  }
  if (!(source_lambda >= 0.0 && source_lambda <= 1.0)) {
    throw Error("source_lambda must lie in [0, 1]");
  }
}

// --- Source training ---------------------------------------------------------

namespace {

Grid Rotate(const Grid& image, double radians) {
  Grid out(image.height, image.width);
  const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
  const double c = std::cos(radians), s = std::sin(radians);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double sx = c * dx + s * dy + cx, sy = -s * dx + c * dy + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double ax = sx - fx, ay = sy - fy;
      double v = 0.0;
      for (int oy = 0; oy < 2; ++oy) {
        for (int ox = 0; ox < 2; ++ox) {
          const double px = fx + ox, py = fy + oy;
          if (px < 0 || py < 0 || px >= static_cast<double>(image.width) ||
              py >= static_cast<double>(image.height)) {
            continue;
          }
          const double wgt = (ox ? ax : 1.0 - ax) * (oy ? ay : 1.0 - ay);
          v += wgt * image.at(static_cast<std::size_t>(py), static_cast<std::size_t>(px));
        }
      }
      out.at(y, x) = v;
    }
  }
  return out;
}

Grid Augment(const Grid& image, const TrainConfig& config, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Grid out = image;
  if (config.flip_prob > 0.0 && unit(rng) < config.flip_prob) {
    for (std::size_t y = 0; y < out.height; ++y) {
      std::reverse(out.values.begin() + static_cast<std::ptrdiff_t>(y * out.width),
                   out.values.begin() + static_cast<std::ptrdiff_t>((y + 1) * out.width));
    }
  }
  if (config.max_rotation_deg > 0.0) {
    const double deg = (2.0 * unit(rng) - 1.0) * config.max_rotation_deg;
    out = Rotate(out, deg * std::numbers::pi / 180.0);
  }
  const double exponent =
      config.contrast_min + (config.contrast_max - config.contrast_min) * unit(rng);
  for (double& v : out.values) v = std::pow(std::clamp(v, 0.0, 1.0), exponent);
  return out;
}

}  // namespace

std::vector<int> PredictLabels(const MicroCnn& model, std::span<const Grid> images) {
  constexpr std::size_t kChunk = 64;
  std::vector<int> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const std::size_t end = std::min(images.size(), start + kChunk);
    const auto pred = ArgmaxRows(Predict(model, MakeBatch(images.subspan(start, end - start))));
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

double Accuracy(const MicroCnn& model, std::span<const Grid> images, std::span<const int> labels) {
  if (images.empty()) throw Error("accuracy of an empty set");
  const auto pred = PredictLabels(model, images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

TrainReport TrainSource(MicroCnn& model, const LabeledImageSet& train, const LabeledImageSet& val,
                        const TrainConfig& config) {
  if (train.empty()) throw Error("train_source: empty training set");
  if (val.empty()) throw Error("train_source: empty validation set");
  train.Validate(model.num_classes());
  val.Validate(model.num_classes());
  if (config.batch_size == 0) throw Error("train_source: batch size must be positive");

  TrainReport report;
  report.best_val_accuracy = Accuracy(model, val.images, val.labels);
  MicroCnn best = model.Clone();
  AdamW optimizer(model.parameters(), {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    optimizer.set_lr(epoch > (2 * config.epochs) / 3 ? 0.3 * config.lr : config.lr);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Grid> images;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        images.push_back(Augment(train.images[order[i]], config, rng));
        labels.push_back(train.labels[order[i]]);
      }
      Graph graph;
      const ForwardOutput out = model.Forward(graph, MakeBatch(images));
      const Tensor loss = graph.CrossEntropy(out.logits, labels);
      graph.Backward(loss);
      optimizer.Step(model.parameters());
      loss_sum += loss.item();
      ++batches;
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(batches));
    const double acc = Accuracy(model, val.images, val.labels);
    report.val_accuracy.push_back(acc);
    if (acc > report.best_val_accuracy) {
      report.best_val_accuracy = acc;
      report.best_epoch = epoch;
      best.CopyValuesFrom(model);
    }
  }
  model.CopyValuesFrom(best);
  ZeroGrads(model.parameters());
  return report;
}

// --- Test-time adaptation ----------------------------------------------------

AdaptationBatch BuildAdaptationBatch(const Grid& x_t, const Grid& style_a, const Grid& style_b,
                                     const LowPassMask& mask, const AdaptationConfig& config) {
  const ComplexSpectrum spectrum = Fft2(x_t);
  AdaptationBatch batch;
  batch.lambdas = config.lambdas;
  batch.x_t = x_t;
  batch.x_t1 = Stylize(x_t, spectrum, style_a, config.source_lambda, mask);
  batch.x_t2 = Stylize(x_t, spectrum, style_b, config.source_lambda, mask);
  const Grid* styles[2] = {&style_a, &style_b};
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < kGroupSize; ++j) {
      batch.groups[i][j] = Stylize(x_t, spectrum, *styles[i], config.lambdas[j], mask);
    }
  }
  return batch;
}

namespace {

int ArgmaxOfMeanRows(std::span<const double> logits, std::size_t k, std::size_t row_a,
                     std::size_t row_b) {
  std::size_t best = 0;
  double best_value = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double v = 0.5 * (logits[row_a * k + c] + logits[row_b * k + c]);
    if (c == 0 || v > best_value) {
      best = c;
      best_value = v;
    }
  }
  return static_cast<int>(best);
}

}  // namespace

AdaptationLoss BuildAdaptationLoss(Graph& graph, const MicroCnn& model,
                                   const ConsistencyWeights& weights,
                                   const AdaptationBatch& batch, const AdaptationConfig& config) {
  const auto images = batch.Images();
  const std::size_t k = model.num_classes();

  AdaptationLoss result;
  result.forward = model.Forward(graph, MakeBatch(images));
  const ForwardOutput& out = result.forward;
  const auto logits = out.logits.data();
  result.baseline_prediction = ArgmaxOfMeanRows(logits, k, 0, 0);
  result.ia_prediction = ArgmaxOfMeanRows(logits, k, 1, 2);
  result.cam_class = result.ia_prediction;

  // Global: integrated features of the two groups.
  std::array<Tensor, kGroupSize> g1, g2;
  for (std::size_t j = 0; j < kGroupSize; ++j) {
    g1[j] = graph.Row(out.features, 3 + j);
    g2[j] = graph.Row(out.features, 3 + kGroupSize + j);
  }
  LossFlags flags;
  const Tensor global = LossGlobal(graph, IntegrateGroup(graph, g1, weights.u),
                                   IntegrateGroup(graph, g2, weights.v), &flags);

  // Local: integrated Grad-CAMs for the shared class.
  std::vector<bool> degenerate;
  const Tensor cams =
      CamGraph(graph, model, out, static_cast<std::size_t>(result.cam_class), &degenerate);
  bool side_degenerate[2] = {true, true};
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < kGroupSize; ++j) {
      const bool d = degenerate[3 + i * kGroupSize + j];
      flags.degenerate_cam = flags.degenerate_cam || d;
      side_degenerate[i] = side_degenerate[i] && d;
    }
  }
  Tensor local;
  if (side_degenerate[0] && side_degenerate[1]) {
    flags.local_skipped = true;
  } else {
    std::array<Tensor, kGroupSize> c1, c2;
    for (std::size_t j = 0; j < kGroupSize; ++j) {
      c1[j] = graph.Row(cams, 3 + j);
      c2[j] = graph.Row(cams, 3 + kGroupSize + j);
    }
    local = LossLocal(graph, IntegrateGroup(graph, c1, weights.u),
                      IntegrateGroup(graph, c2, weights.v));
  }

  const Tensor style = LossStyle(graph, out.logits, config.lambdas);
  result.total = CombineLosses(graph, global, local, style, config.weights);
  flags.log_saturated = graph.log_saturated();
  result.total.breakdown.flags = flags;
  return result;
}

AdaptResult AdaptSingle(MicroCnn& model, ConsistencyWeights& weights, const Grid& x_t,
                        const Grid& style_a, const Grid& style_b, const LowPassMask& mask,
                        const AdaptationConfig& config) {
  const AdaptationBatch batch = BuildAdaptationBatch(x_t, style_a, style_b, mask, config);
  const std::size_t k = model.num_classes();

  AdaptResult result;
  Graph graph;
  const AdaptationLoss loss = BuildAdaptationLoss(graph, model, weights, batch, config);
  const TotalLoss& total = loss.total;
  result.adaptation_images = static_cast<int>(AdaptationBatch::kNumImages);
  result.baseline_prediction = loss.baseline_prediction;
  result.ia_prediction = loss.ia_prediction;
  result.cam_class = loss.cam_class;
  result.loss = total.breakdown;

  const bool any_weight =
      config.weights.global > 0.0 || config.weights.local > 0.0 || config.weights.style > 0.0;
  if (!config.update || !any_weight) {
    result.prediction = result.ia_prediction;
    return result;
  }

  ParameterList trainable = model.parameters();
  trainable.push_back({"u", weights.u});
  trainable.push_back({"v", weights.v});
  for (auto& p : trainable) {
    p.tensor.mutable_grad();
    p.tensor.zero_grad();
  }
  graph.Backward(total.value);
  result.backward_passes = 1;
  SgdStep(trainable, config.lr);

  const std::array<Grid, 2> views = {batch.x_t1, batch.x_t2};
  const Tensor post = Predict(model, MakeBatch(views));
  result.prediction_images = 2;
  result.prediction = ArgmaxOfMeanRows(post.data(), k, 0, 1);
  return result;
}

// --- Metrics -----------------------------------------------------------------

Metrics ComputeMetrics(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) throw Error("metrics: label/prediction count mismatch");
  Metrics m;
  if (labels.empty()) return m;
  int top = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) top = std::max({top, labels[i], predictions[i]});
  const std::size_t classes = static_cast<std::size_t>(top) + 1;
  std::vector<double> tp(classes, 0.0), true_count(classes, 0.0), pred_count(classes, 0.0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    true_count[labels[i]] += 1.0;
    pred_count[predictions[i]] += 1.0;
    if (labels[i] == predictions[i]) {
      tp[labels[i]] += 1.0;
      ++correct;
    }
  }
  double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (true_count[c] == 0.0 && pred_count[c] == 0.0) continue;
    ++present;
    const double p = pred_count[c] > 0.0 ? tp[c] / pred_count[c] : 0.0;
    const double r = true_count[c] > 0.0 ? tp[c] / true_count[c] : 0.0;
    p_sum += p;
    r_sum += r;
    f_sum += p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  m.defined = true;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  m.precision = p_sum / static_cast<double>(present);
  m.recall = r_sum / static_cast<double>(present);
  m.f1 = f_sum / static_cast<double>(present);
  return m;
}

void StreamReport::RecomputeMetrics() {
  std::vector<int> labels, base, ia, post;
  for (const auto& r : records) {
    labels.push_back(r.label);
    base.push_back(r.baseline_prediction);
    ia.push_back(r.ia_prediction);
    post.push_back(r.prediction);
  }
  baseline = ComputeMetrics(labels, base);
  input_adaptation = ComputeMetrics(labels, ia);
  adapted = ComputeMetrics(labels, post);
}

StreamReport RunStream(const MicroCnn& source, const LabeledImageSet& test, const StyleBank& bank,
                       const AdaptationConfig& config) {
  config.Validate();
  if (!bank.chosen_pair) throw Error("style bank has no chosen pair; run style selection first");
  if (bank.beta != config.beta) {
    throw Error("style bank was built with beta=" + std::to_string(bank.beta) +
                " but the configuration asks for beta=" + std::to_string(config.beta));
  }
  test.Validate(std::max<std::size_t>(source.num_classes(), test.NumClasses()));
  StreamReport report;
  report.config = config;
  if (test.empty()) return report;
  const LowPassMask mask = bank.mask();
  const Grid& style_a = bank.entry(bank.chosen_pair->first).amplitude;
  const Grid& style_b = bank.entry(bank.chosen_pair->second).amplitude;

  MicroCnn model = source.Clone();
  ConsistencyWeights weights = ConsistencyWeights::Zeros();
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (config.mode == AdaptMode::kEpisodic) {
      model.CopyValuesFrom(source);
      weights.Reset();
    }
    const AdaptResult r = AdaptSingle(model, weights, test.images[i], style_a, style_b, mask, config);
    report.records.push_back(
        {i, test.labels[i], r.baseline_prediction, r.ia_prediction, r.prediction, r.loss});
    report.adaptation_images += r.adaptation_images;
    report.backward_passes += r.backward_passes;
  }
  report.RecomputeMetrics();
  return report;
}

// --- Report files ------------------------------------------------------------

namespace {

std::string Num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::ordered_json MetricsJson(const Metrics& m) {
  nlohmann::ordered_json j;
  j["defined"] = m.defined;
  if (m.defined) {
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
  }
  return j;
}

}  // namespace

void WriteReportCsv(const StreamReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "image_id,label,baseline_pred,ia_pred,post_pred,L_f,L_c,L_s,total,flags\n";
  for (const auto& r : report.records) {
    out << r.image_id << ',' << r.label << ',' << r.baseline_prediction << ',' << r.ia_prediction
        << ',' << r.prediction << ',' << Num(r.loss.global) << ',' << Num(r.loss.local) << ','
        << Num(r.loss.style) << ',' << Num(r.loss.total) << ',' << r.loss.flags.ToString() << '\n';
  }
}

std::vector<ImageRecord> ReadReportCsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<ImageRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) throw FormatError(FormatError::Kind::kBadValue, "bad report row: " + line);
    ImageRecord r;
    r.image_id = std::stoul(cells[0]);
    r.label = std::stoi(cells[1]);
    r.baseline_prediction = std::stoi(cells[2]);
    r.ia_prediction = std::stoi(cells[3]);
    r.prediction = std::stoi(cells[4]);
    r.loss.global = std::stod(cells[5]);
    r.loss.local = std::stod(cells[6]);
    r.loss.style = std::stod(cells[7]);
    r.loss.total = std::stod(cells[8]);
    records.push_back(r);
  }
  return records;
}

void WriteReportJson(const StreamReport& report, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  const auto config = AdaptationConfigToJson(report.config);
  j["run_id"] = RunId(config);
  j["config"] = config;
  j["images"] = report.records.size();
  j["adaptation_images"] = report.adaptation_images;
  j["backward_passes"] = report.backward_passes;
  j["metrics"]["baseline"] = MetricsJson(report.baseline);
  j["metrics"]["input_adaptation"] = MetricsJson(report.input_adaptation);
  j["metrics"]["adapted"] = MetricsJson(report.adapted);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace ftta
