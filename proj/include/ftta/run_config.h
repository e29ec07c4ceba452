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

#ifndef FTTA_RUN_CONFIG_H_
#define FTTA_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "ftta/adapt.h"

namespace ftta {

struct RunPaths {
  std::string train_images;
  std::string train_labels;
  std::string val_images;
  std::string val_labels;
  std::string test_images;
  std::string test_labels;
  std::string bank_dir;
  std::string checkpoint;
  std::string output_dir;
};

// Everything one CLI invocation needs. Serialized as JSON; unknown keys are
// rejected when parsing.
struct RunConfig {
  std::uint64_t seed = 0;
  RunPaths paths;
  TrainConfig train;
  AdaptationConfig adapt;
  // "online", "episodic" or "both".
  std::string mode = "online";
  // Styles drawn (seeded) from the training set; 0 keeps every image.
  std::size_t bank_size = 0;
  // Validation images used for style scoring; 0 keeps all of them.
  std::size_t score_subset = 0;
  // 0: inferred from the training labels.
  std::size_t num_classes = 0;

  // Pushes the shared seed into the train and adapt sections.
  void PropagateSeed();
};

nlohmann::ordered_json AdaptationConfigToJson(const AdaptationConfig& config);
nlohmann::ordered_json RunConfigToJson(const RunConfig& config);
RunConfig RunConfigFromJson(const nlohmann::json& json);
RunConfig LoadRunConfig(const std::filesystem::path& path);

// 16 hex digits derived from the canonical JSON text.
std::string RunId(const nlohmann::ordered_json& config);

}  // namespace ftta

#endif  // FTTA_RUN_CONFIG_H_
