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


// ftta: command-line front end for source training, style selection,
// test-time adaptation and artifact export.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ftta/adapt.h"
#include "ftta/data_io.h"
#include "ftta/run_config.h"
#include "ftta/style_bank.h"

namespace fs = std::filesystem;

namespace {

using ftta::RunConfig;

// Bad invocation: maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t WorkerThreads() {
  if (const char* env = std::getenv("FTTA_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) throw UsageError("FTTA_THREADS must be a positive integer");
    return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

const std::string& Require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError("missing required path " + flag);
  return value;
}

void RequireExists(const std::string& value, const std::string& flag) {
  Require(value, flag);
  if (!fs::exists(value)) throw UsageError(flag + ": no such file or directory: " + value);
}

template <typename T>
void Override(T& field, const std::optional<T>& value) {
  if (value) field = *value;
}

void WriteJson(const nlohmann::ordered_json& json, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ftta::Error("cannot write " + path.string());
  out << json.dump(2) << "\n";
}

nlohmann::ordered_json MetricsJson(const ftta::Metrics& m) {
  nlohmann::ordered_json j;
  j["defined"] = m.defined;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  return j;
}

std::vector<std::size_t> ParseIds(const std::string& text) {
  std::vector<std::size_t> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      ids.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--ids: not an image id: '" + item + "'");
    }
  }
  if (ids.empty()) throw UsageError("--ids: no image ids given");
  return ids;
}

// Options shared by every subcommand that reads the run configuration.
struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;

  std::optional<std::string> train_images, train_labels, val_images, val_labels;
  std::optional<std::string> test_images, test_labels, bank_dir, checkpoint, output_dir;
  std::optional<std::size_t> num_classes;

  std::optional<std::size_t> epochs, batch_size;
  std::optional<double> train_lr, weight_decay;

  std::optional<double> lr, beta, source_lambda;
  std::optional<std::size_t> k, bank_size, score_subset;
  std::optional<double> w_global, w_local, w_style;
  std::optional<std::string> mode;
  bool no_update = false;

  RunConfig Resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : ftta::LoadRunConfig(config_path);
    Override(c.seed, seed);
    Override(c.paths.train_images, train_images);
    Override(c.paths.train_labels, train_labels);
    Override(c.paths.val_images, val_images);
    Override(c.paths.val_labels, val_labels);
    Override(c.paths.test_images, test_images);
    Override(c.paths.test_labels, test_labels);
    Override(c.paths.bank_dir, bank_dir);
    Override(c.paths.checkpoint, checkpoint);
    Override(c.paths.output_dir, output_dir);
    Override(c.num_classes, num_classes);
    Override(c.train.epochs, epochs);
    Override(c.train.batch_size, batch_size);
    Override(c.train.lr, train_lr);
    Override(c.train.weight_decay, weight_decay);
    Override(c.adapt.lr, lr);
    Override(c.adapt.beta, beta);
    Override(c.adapt.source_lambda, source_lambda);
    Override(c.adapt.k, k);
    Override(c.bank_size, bank_size);
    Override(c.score_subset, score_subset);
    Override(c.adapt.weights.global, w_global);
    Override(c.adapt.weights.local, w_local);
    Override(c.adapt.weights.style, w_style);
    if (mode) {
      if (*mode != "online" && *mode != "episodic" && *mode != "both") {
        throw UsageError("--mode must be online, episodic or both");
      }
      c.mode = *mode;
      if (c.mode != "both") c.adapt.mode = ftta::ParseAdaptMode(c.mode);
    }
    if (no_update) c.adapt.update = false;
    c.PropagateSeed();
    return c;
  }
};

void AddPathOptions(CLI::App* cmd, CommonOptions& o, bool train, bool val, bool test, bool bank,
                    bool checkpoint, bool output) {
  if (train) {
    cmd->add_option("--train-images", o.train_images, "Training images (IDX)");
    cmd->add_option("--train-labels", o.train_labels, "Training labels (IDX)");
  }
  if (val) {
    cmd->add_option("--val-images", o.val_images, "Validation images (IDX)");
    cmd->add_option("--val-labels", o.val_labels, "Validation labels (IDX)");
  }
  if (test) {
    cmd->add_option("--test-images", o.test_images, "Test images (IDX)");
    cmd->add_option("--test-labels", o.test_labels, "Test labels (IDX)");
  }
  if (bank) cmd->add_option("--bank-dir", o.bank_dir, "Style bank directory");
  if (checkpoint) cmd->add_option("--checkpoint", o.checkpoint, "Model checkpoint file");
  if (output) cmd->add_option("--output-dir", o.output_dir, "Output directory");
}

ftta::LabeledImageSet LoadSet(const std::string& images, const char* images_flag,
                              const std::string& labels, const char* labels_flag,
                              const char* split) {
  RequireExists(images, images_flag);
  RequireExists(labels, labels_flag);
  ftta::LabeledImageSet set = ftta::LoadIdx(images, labels);
  set.split = split;
  return set;
}

ftta::MicroCnn LoadModel(const RunConfig& c) {
  RequireExists(c.paths.checkpoint, "--checkpoint");
  return ftta::MicroCnn::Load(c.paths.checkpoint);
}

// Seeded subset of `n` indices (all of them when `limit` is 0 or >= n), in
// ascending order.
std::vector<std::size_t> SeededSubset(std::size_t n, std::size_t limit, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (limit == 0 || limit >= n) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// --- train -------------------------------------------------------------------

int CmdTrain(const RunConfig& c) {
  auto train = LoadSet(c.paths.train_images, "--train-images", c.paths.train_labels,
                       "--train-labels", "train");
  auto val = LoadSet(c.paths.val_images, "--val-images", c.paths.val_labels, "--val-labels", "val");
  Require(c.paths.checkpoint, "--checkpoint");
  if (train.empty()) throw ftta::Error("training set is empty");
  const std::size_t k = c.num_classes ? c.num_classes : train.NumClasses();
  train.Validate(k);
  val.Validate(k);
  ftta::MicroCnn model(k, train.images[0].height, train.images[0].width, c.seed);
  const ftta::TrainReport report = ftta::TrainSource(model, train, val, c.train);
  model.Save(c.paths.checkpoint);

  nlohmann::ordered_json j;
  j["run_id"] = ftta::RunId(ftta::RunConfigToJson(c));
  j["num_classes"] = k;
  j["train_size"] = train.size();
  j["val_size"] = val.size();
  j["best_epoch"] = report.best_epoch;
  j["best_val_accuracy"] = report.best_val_accuracy;
  j["train_loss"] = report.train_loss;
  j["val_accuracy"] = report.val_accuracy;
  const fs::path out = c.paths.output_dir.empty()
                           ? fs::path(c.paths.checkpoint).replace_extension(".metrics.json")
                           : fs::path(c.paths.output_dir) / "train_metrics.json";
  WriteJson(j, out);
  std::printf("checkpoint %s  best epoch %zu  val accuracy %.4f\n", c.paths.checkpoint.c_str(),
              report.best_epoch, report.best_val_accuracy);
  return 0;
}

// --- select-styles -----------------------------------------------------------

int CmdSelectStyles(const RunConfig& c) {
  auto train = LoadSet(c.paths.train_images, "--train-images", c.paths.train_labels,
                       "--train-labels", "train");
  auto val = LoadSet(c.paths.val_images, "--val-images", c.paths.val_labels, "--val-labels", "val");
  Require(c.paths.bank_dir, "--bank-dir");
  const ftta::MicroCnn model = LoadModel(c);
  if (val.empty()) throw ftta::Error("validation set is empty");

  const auto bank_idx = SeededSubset(train.size(), c.bank_size, c.seed);
  std::vector<ftta::Grid> styles;
  std::vector<std::string> sources;
  for (std::size_t i : bank_idx) {
    styles.push_back(train.images[i]);
    sources.push_back("train:" + std::to_string(i));
  }
  ftta::StyleBank bank = ftta::BuildBank(styles, c.adapt.beta, sources);

  const auto val_idx = SeededSubset(val.size(), c.score_subset, c.seed + 1);
  const ftta::LabeledImageSet scoring = val.Subset(val_idx);
  ftta::ScoreStyles(bank, model, scoring.images, scoring.labels, WorkerThreads());
  const auto pair = ftta::SelectPair(bank, c.adapt.k);
  ftta::SaveBank(bank, c.paths.bank_dir);
  std::printf("bank %s  styles %zu  chosen pair (%d, %d)\n", c.paths.bank_dir.c_str(),
              bank.entries.size(), pair.first, pair.second);
  return 0;
}

// --- adapt -------------------------------------------------------------------

ftta::StyleBank LoadScoredBank(const RunConfig& c) {
  RequireExists(c.paths.bank_dir, "--bank-dir");
  ftta::StyleBank bank = ftta::LoadBank(c.paths.bank_dir);
  if (!bank.chosen_pair) throw ftta::Error("style bank has no chosen pair; run select-styles");
  return bank;
}

int CmdAdapt(const RunConfig& c, bool beta_given) {
  auto test = LoadSet(c.paths.test_images, "--test-images", c.paths.test_labels, "--test-labels",
                      "test");
  Require(c.paths.output_dir, "--output-dir");
  if (test.empty()) throw ftta::Error("test set is empty: " + c.paths.test_images);
  const ftta::MicroCnn model = LoadModel(c);
  const ftta::StyleBank bank = LoadScoredBank(c);
  test.Validate(model.num_classes());

  ftta::AdaptationConfig config = c.adapt;
  if (beta_given && config.beta != bank.beta) {
    throw UsageError("--beta differs from the style bank's beta (" + std::to_string(bank.beta) + ")");
  }
  config.beta = bank.beta;

  std::vector<ftta::AdaptMode> modes;
  if (c.mode == "both") {
    modes = {ftta::AdaptMode::kOnline, ftta::AdaptMode::kEpisodic};
  } else {
    modes = {config.mode};
  }
  const fs::path out_dir = c.paths.output_dir;
  fs::create_directories(out_dir);
  nlohmann::ordered_json summary;
  for (ftta::AdaptMode mode : modes) {
    config.mode = mode;
    const ftta::StreamReport report = ftta::RunStream(model, test, bank, config);
    const std::string tag = ftta::ToString(mode);
    ftta::WriteReportCsv(report, out_dir / ("report_" + tag + ".csv"));
    ftta::WriteReportJson(report, out_dir / ("report_" + tag + ".json"));
    summary["baseline"] = MetricsJson(report.baseline);
    summary["input_adaptation"] = MetricsJson(report.input_adaptation);
    summary[tag] = MetricsJson(report.adapted);
    std::printf("%-8s baseline %.4f  input-adaptation %.4f  adapted %.4f\n", tag.c_str(),
                report.baseline.accuracy, report.input_adaptation.accuracy,
                report.adapted.accuracy);
  }
  WriteJson(summary, out_dir / "summary.json");
  return 0;
}

// --- export ------------------------------------------------------------------

std::string LambdaTag(double lambda) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", lambda);
  return buf;
}

int CmdExport(const RunConfig& c, const std::string& ids_text, const std::vector<double>& sweep) {
  auto test = LoadSet(c.paths.test_images, "--test-images", c.paths.test_labels, "--test-labels",
                      "test");
  Require(c.paths.output_dir, "--output-dir");
  const ftta::MicroCnn model = LoadModel(c);
  const ftta::StyleBank bank = LoadScoredBank(c);
  const auto ids = ParseIds(ids_text);
  for (std::size_t id : ids) {
    if (id >= test.size()) {
      throw ftta::Error("unknown image id " + std::to_string(id) + "; available ids: 0.." +
                        std::to_string(test.size() == 0 ? 0 : test.size() - 1));
    }
  }
  for (double l : sweep) {
    if (!(l >= 0.0 && l <= 1.0)) throw UsageError("--lambdas: values must lie in [0, 1]");
  }

  const fs::path out_dir = c.paths.output_dir;
  fs::create_directories(out_dir);
  const ftta::LowPassMask mask = bank.mask();
  const auto [id_a, id_b] = *bank.chosen_pair;
  const ftta::Grid& style_a = bank.entry(id_a).amplitude;
  const ftta::Grid& style_b = bank.entry(id_b).amplitude;

  nlohmann::ordered_json index;
  index["chosen_pair"] = {id_a, id_b};
  index["beta"] = bank.beta;
  for (std::size_t id : ids) {
    const ftta::Grid& x_t = test.images[id];
    const std::string stem = "img" + std::to_string(id);
    ftta::WritePgm(x_t, out_dir / (stem + ".pgm"));
    nlohmann::ordered_json entry;
    entry["id"] = id;
    entry["label"] = test.labels[id];
    const std::pair<int, const ftta::Grid*> styles[2] = {{id_a, &style_a}, {id_b, &style_b}};
    std::vector<ftta::Grid> source_like;
    for (const auto& [style_id, style] : styles) {
      nlohmann::ordered_json distances = nlohmann::ordered_json::array();
      for (double lambda : sweep) {
        const ftta::Grid restyled = ftta::Stylize(x_t, *style, lambda, bank.beta);
        ftta::WritePgm(restyled, out_dir / (stem + "_style" + std::to_string(style_id) + "_lam" +
                                            LambdaTag(lambda) + ".pgm"));
        const ftta::Grid low = ftta::LowBandAmplitude(restyled, mask);
        distances.push_back({{"lambda", lambda}, {"distance", ftta::MaskedDistance(low, *style, mask)}});
      }
      entry["style_distance"][std::to_string(style_id)] = distances;
      source_like.push_back(ftta::Stylize(x_t, *style, c.adapt.source_lambda, bank.beta));
    }
    const ftta::Tensor logits = ftta::Predict(model, ftta::MakeBatch(source_like));
    std::size_t cls = 0;
    const std::size_t k = model.num_classes();
    for (std::size_t j = 1; j < k; ++j) {
      if (logits.data()[j] + logits.data()[k + j] > logits.data()[cls] + logits.data()[k + cls]) cls = j;
    }
    entry["cam_class"] = cls;
    for (std::size_t v = 0; v < 2; ++v) {
      const ftta::Tensor image = ftta::MakeBatch(std::span<const ftta::Grid>(&source_like[v], 1));
      const ftta::CamMap cam = ftta::GradCam(model, image, cls);
      ftta::ExportCam(cam, source_like[v], out_dir / (stem + "_view" + std::to_string(v + 1) + "_cam.pgm"));
      entry["cam_degenerate"].push_back(cam.degenerate);
    }
    index["images"].push_back(entry);
  }
  WriteJson(index, out_dir / "export_index.json");
  std::printf("exported %zu image(s) to %s\n", ids.size(), out_dir.string().c_str());
  return 0;
}

// --- data preparation --------------------------------------------------------

int CmdGenDigits(std::size_t count, std::size_t classes, std::size_t size, std::uint64_t seed,
                 const std::string& images, const std::string& labels) {
  Require(images, "--images");
  Require(labels, "--labels");
  const auto set = ftta::GenerateDigits(count, classes, size, seed);
  ftta::SaveIdx(set, images, labels);
  std::printf("wrote %zu digits (%zu classes, %zux%zu)\n", count, classes, size, size);
  return 0;
}

int CmdShift(const std::string& in_images, const std::string& in_labels,
             const std::string& out_images, const std::string& out_labels,
             const ftta::ShiftParams& params, std::uint64_t seed) {
  RequireExists(in_images, "--images");
  RequireExists(in_labels, "--labels");
  Require(out_images, "--out-images");
  Require(out_labels, "--out-labels");
  const auto set = ftta::LoadIdx(in_images, in_labels);
  ftta::SaveIdx(ftta::SynthShift(set, params, seed), out_images, out_labels);
  std::printf("wrote %zu shifted images\n", set.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fourier test-time adaptation for small image classifiers"};
  app.require_subcommand(1);
  CommonOptions opts;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config_path, "Run configuration (JSON)");
    cmd->add_option("--seed", opts.seed, "Seed for every random choice");
  };

  auto* train = app.add_subcommand("train", "Train the source classifier");
  add_common(train);
  AddPathOptions(train, opts, true, true, false, false, true, true);
  train->add_option("--num-classes", opts.num_classes, "Number of classes (default: from labels)");
  train->add_option("--epochs", opts.epochs, "Training epochs");
  train->add_option("--batch-size", opts.batch_size, "Mini-batch size");
  train->add_option("--train-lr", opts.train_lr, "AdamW learning rate");
  train->add_option("--weight-decay", opts.weight_decay, "AdamW weight decay");

  auto* select = app.add_subcommand("select-styles", "Build, score and select the style pair");
  add_common(select);
  AddPathOptions(select, opts, true, true, false, true, true, false);
  select->add_option("--beta", opts.beta, "Low-pass radius fraction");
  select->add_option("--k", opts.k, "Top-k cutoff");
  select->add_option("--bank-size", opts.bank_size, "Styles drawn from the training set (0 = all)");
  select->add_option("--score-subset", opts.score_subset, "Validation images used for scoring (0 = all)");

  auto* adapt = app.add_subcommand("adapt", "Run test-time adaptation over a test stream");
  add_common(adapt);
  AddPathOptions(adapt, opts, false, false, true, true, true, true);
  adapt->add_option("--lr", opts.lr, "Test-time learning rate");
  auto* beta_opt = adapt->add_option("--beta", opts.beta, "Must match the bank");
  adapt->add_option("--source-lambda", opts.source_lambda, "Coefficient for the source-like views");
  adapt->add_option("--mode", opts.mode, "online, episodic or both");
  adapt->add_option("--w-global", opts.w_global, "Weight of the global feature loss");
  adapt->add_option("--w-local", opts.w_local, "Weight of the CAM loss");
  adapt->add_option("--w-style", opts.w_style, "Weight of the logit style loss");
  adapt->add_flag("--no-update", opts.no_update, "Input adaptation only");

  auto* exp = app.add_subcommand("export", "Write restyled images and CAM composites");
  add_common(exp);
  AddPathOptions(exp, opts, false, false, true, true, true, true);
  std::string ids_text;
  std::vector<double> sweep{0.0, 0.25, 0.5, 0.75, 1.0};
  exp->add_option("--ids", ids_text, "Comma-separated test image ids")->required();
  exp->add_option("--lambdas", sweep, "Interpolation coefficients to export");

  auto* config = app.add_subcommand("config", "Configuration helpers");
  config->require_subcommand(1);
  auto* print_default = config->add_subcommand("print-default", "Print the default configuration");

  auto* gen = app.add_subcommand("gen-digits", "Render a synthetic digit set as IDX files");
  std::size_t gen_count = 1000, gen_classes = 6, gen_size = 32;
  std::uint64_t gen_seed = 0;
  std::string gen_images, gen_labels;
  gen->add_option("--count", gen_count, "Number of images");
  gen->add_option("--classes", gen_classes, "Number of classes (2..10)");
  gen->add_option("--size", gen_size, "Image side length");
  gen->add_option("--seed", gen_seed, "Seed");
  gen->add_option("--images", gen_images, "Output images file");
  gen->add_option("--labels", gen_labels, "Output labels file");

  auto* shift = app.add_subcommand("shift", "Apply a synthetic appearance shift to an IDX set");
  ftta::ShiftParams shift_params;
  std::uint64_t shift_seed = 0;
  std::string shift_in_images, shift_in_labels, shift_out_images, shift_out_labels;
  shift->add_option("--images", shift_in_images, "Input images");
  shift->add_option("--labels", shift_in_labels, "Input labels");
  shift->add_option("--out-images", shift_out_images, "Output images");
  shift->add_option("--out-labels", shift_out_labels, "Output labels");
  shift->add_option("--gamma", shift_params.gamma, "Low-band amplitude scale");
  shift->add_option("--sigma", shift_params.sigma, "Mid-band phase jitter");
  shift->add_option("--contrast", shift_params.contrast, "Pixel exponent");
  shift->add_option("--seed", shift_seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*print_default) {
      std::cout << ftta::RunConfigToJson(RunConfig{}).dump(2) << "\n";
      return 0;
    }
    if (*gen) return CmdGenDigits(gen_count, gen_classes, gen_size, gen_seed, gen_images, gen_labels);
    if (*shift) {
      return CmdShift(shift_in_images, shift_in_labels, shift_out_images, shift_out_labels,
                      shift_params, shift_seed);
    }
    const RunConfig c = opts.Resolve();
    c.adapt.Validate();
    if (*train) return CmdTrain(c);
    if (*select) return CmdSelectStyles(c);
    if (*adapt) return CmdAdapt(c, beta_opt->count() > 0);
    if (*exp) return CmdExport(c, ids_text, sweep);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
