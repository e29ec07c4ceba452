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

#include "ftta/style_bank.h"

#include <algorithm>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "ftta/checkpoint.h"

namespace ftta {

bool StyleBank::scored() const {
  return !entries.empty() &&
         std::all_of(entries.begin(), entries.end(), [](const StyleEntry& e) { return e.score; });
}

const StyleEntry& StyleBank::entry(int style_id) const {
  for (const auto& e : entries) {
    if (e.style_id == style_id) return e;
  }
  throw Error("style " + std::to_string(style_id) + " not in bank");
}

LowPassMask StyleBank::mask() const {
  if (entries.empty()) throw Error("empty style bank");
  return MakeMask(entries[0].amplitude.height, entries[0].amplitude.width, beta);
}

StyleBank BuildBank(std::span<const Grid> images, double beta,
                    std::span<const std::string> sources) {
  if (images.size() < 2) throw Error("style bank needs at least 2 training images");
  if (!sources.empty() && sources.size() != images.size()) {
    throw Error("style bank: one source label per image required");
  }
  StyleBank bank;
  bank.beta = beta;
  const LowPassMask mask = MakeMask(images[0].height, images[0].width, beta);
  for (std::size_t i = 0; i < images.size(); ++i) {
    StyleEntry e;
    e.style_id = static_cast<int>(i);
    e.amplitude = LowBandAmplitude(images[i], mask);
    e.source = sources.empty() ? "train:" + std::to_string(i) : sources[i];
    bank.entries.push_back(std::move(e));
  }
  return bank;
}

double RestyledAccuracy(const MicroCnn& model, std::span<const Grid> images,
                        std::span<const int> labels, const Grid& style, double lambda,
                        const LowPassMask& mask) {
  if (images.empty()) throw Error("empty validation set");
  if (images.size() != labels.size()) throw Error("validation images and labels differ in count");
  constexpr std::size_t kChunk = 64;
  std::size_t correct = 0;
  std::vector<Grid> chunk;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const std::size_t end = std::min(images.size(), start + kChunk);
    chunk.clear();
    for (std::size_t i = start; i < end; ++i) {
      chunk.push_back(Stylize(images[i], Fft2(images[i]), style, lambda, mask));
    }
    const auto pred = ArgmaxRows(Predict(model, MakeBatch(chunk)));
    for (std::size_t i = start; i < end; ++i) correct += pred[i - start] == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

void ScoreStyles(StyleBank& bank, const MicroCnn& model, std::span<const Grid> images,
                 std::span<const int> labels, std::size_t threads) {
  if (images.empty()) throw Error("score_styles: empty validation set");
  const LowPassMask mask = bank.mask();
  const std::size_t n = bank.entries.size();
  std::vector<double> scores(n);
  auto work = [&](std::size_t worker, std::size_t workers) {
    for (std::size_t i = worker; i < n; i += workers) {
      scores[i] = RestyledAccuracy(model, images, labels, bank.entries[i].amplitude, 1.0, mask);
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, n);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  for (std::size_t i = 0; i < n; ++i) bank.entries[i].score = scores[i];
}

StylePair SelectPair(StyleBank& bank, std::size_t k) {
  if (k < 2) throw Error("select_pair: k must be at least 2");
  if (k > bank.entries.size()) {
    throw Error("select_pair: k=" + std::to_string(k) + " exceeds bank size " +
                std::to_string(bank.entries.size()));
  }
  if (!bank.scored()) throw Error("select_pair: bank has not been scored");
  std::vector<const StyleEntry*> ranked;
  for (const auto& e : bank.entries) ranked.push_back(&e);
  std::sort(ranked.begin(), ranked.end(), [](const StyleEntry* a, const StyleEntry* b) {
    if (*a->score != *b->score) return *a->score > *b->score;
    return a->style_id < b->style_id;
  });
  ranked.resize(k);
  const LowPassMask mask = bank.mask();
  std::optional<StylePair> best;
  double best_distance = -1.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const StylePair pair = std::minmax(ranked[i]->style_id, ranked[j]->style_id);
      const double d = MaskedDistance(ranked[i]->amplitude, ranked[j]->amplitude, mask);
      if (d > best_distance || (d == best_distance && pair < *best)) {
        best_distance = d;
        best = pair;
      }
    }
  }
  bank.k = k;
  bank.chosen_pair = best;
  return *best;
}

namespace {

std::string StyleFileName(int style_id) { return "style_" + std::to_string(style_id) + ".ftta"; }

}  // namespace

void SaveBank(const StyleBank& bank, const std::filesystem::path& dir) {
  if (bank.entries.empty()) throw Error("refusing to save an empty style bank");
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json index;
  index["beta"] = bank.beta;
  index["height"] = bank.entries[0].amplitude.height;
  index["width"] = bank.entries[0].amplitude.width;
  index["k"] = bank.k;
  if (bank.chosen_pair) {
    index["chosen_pair"] = {bank.chosen_pair->first, bank.chosen_pair->second};
  } else {
    index["chosen_pair"] = nullptr;
  }
  index["entries"] = nlohmann::json::array();
  for (const auto& e : bank.entries) {
    const Grid& a = e.amplitude;
    WriteTensorFile(dir / StyleFileName(e.style_id),
                    {{"amplitude", Tensor(Shape{a.height, a.width}, a.values)},
                     {"meta", Tensor(Shape{3}, {static_cast<double>(a.height),
                                                static_cast<double>(a.width), bank.beta})}});
    nlohmann::ordered_json row;
    row["style_id"] = e.style_id;
    row["source"] = e.source;
    row["score"] = e.score ? nlohmann::json(*e.score) : nlohmann::json(nullptr);
    row["file"] = StyleFileName(e.style_id);
    index["entries"].push_back(row);
  }
  std::ofstream out(dir / "index.json");
  if (!out) throw Error("cannot write " + (dir / "index.json").string());
  out << index.dump(2) << '\n';
}

StyleBank LoadBank(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw Error("no style bank index at " + (dir / "index.json").string());
  const auto index = nlohmann::json::parse(in);
  StyleBank bank;
  bank.beta = index.at("beta").get<double>();
  bank.k = index.at("k").get<std::size_t>();
  if (!index.at("chosen_pair").is_null()) {
    bank.chosen_pair = StylePair{index["chosen_pair"][0].get<int>(), index["chosen_pair"][1].get<int>()};
  }
  for (const auto& row : index.at("entries")) {
    StyleEntry e;
    e.style_id = row.at("style_id").get<int>();
    e.source = row.at("source").get<std::string>();
    if (!row.at("score").is_null()) e.score = row["score"].get<double>();
    const auto tensors = ReadTensorFile(dir / row.at("file").get<std::string>());
    const Tensor& amp = FindTensor(tensors, "amplitude");
    if (amp.rank() != 2) throw FormatError(FormatError::Kind::kBadValue, "amplitude must be 2-D");
    e.amplitude = Grid(amp.dim(0), amp.dim(1), std::vector<double>(amp.data().begin(), amp.data().end()));
    bank.entries.push_back(std::move(e));
  }
  return bank;
}

}  // namespace ftta
