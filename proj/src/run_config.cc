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

#include "ftta/run_config.h"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <type_traits>

namespace ftta {
namespace {

using Json = nlohmann::json;
using Handler = std::function<void(const Json&)>;

// Applies `handlers` to the keys of `object`; any other key is an error.
void ApplyKeys(const Json& object, const std::string& where,
               const std::map<std::string, Handler>& handlers) {
  if (!object.is_object()) throw Error("config: '" + where + "' must be an object");
  for (const auto& [key, value] : object.items()) {
    const auto it = handlers.find(key);
    if (it == handlers.end()) {
      throw Error("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
    try {
      it->second(value);
    } catch (const Json::exception& e) {
      throw Error("config: bad value for '" + key + "': " + e.what());
    }
  }
}

template <typename T>
Handler Set(T& field) {
  return [&field](const Json& v) {
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_unsigned()) throw Error("config: expected a nonnegative integer");
    }
    field = v.get<T>();
  };
}

}  // namespace

void RunConfig::PropagateSeed() {
  train.seed = seed;
  adapt.seed = seed;
}

nlohmann::ordered_json AdaptationConfigToJson(const AdaptationConfig& c) {
  nlohmann::ordered_json j;
  j["lr"] = c.lr;
  j["lambdas"] = c.lambdas;
  j["beta"] = c.beta;
  j["k"] = c.k;
  j["weights"] = {{"global", c.weights.global}, {"local", c.weights.local}, {"style", c.weights.style}};
  j["mode"] = ToString(c.mode);
  j["seed"] = c.seed;
  j["source_lambda"] = c.source_lambda;
  j["update"] = c.update;
  return j;
}

nlohmann::ordered_json RunConfigToJson(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["num_classes"] = c.num_classes;
  j["paths"] = {{"train_images", c.paths.train_images}, {"train_labels", c.paths.train_labels},
                {"val_images", c.paths.val_images},     {"val_labels", c.paths.val_labels},
                {"test_images", c.paths.test_images},   {"test_labels", c.paths.test_labels},
                {"bank_dir", c.paths.bank_dir},         {"checkpoint", c.paths.checkpoint},
                {"output_dir", c.paths.output_dir}};
  nlohmann::ordered_json t;
  t["epochs"] = c.train.epochs;
  t["batch_size"] = c.train.batch_size;
  t["lr"] = c.train.lr;
  t["weight_decay"] = c.train.weight_decay;
  t["flip_prob"] = c.train.flip_prob;
  t["max_rotation_deg"] = c.train.max_rotation_deg;
  t["contrast_min"] = c.train.contrast_min;
  t["contrast_max"] = c.train.contrast_max;
  j["train"] = t;
  nlohmann::ordered_json a;
  a["lr"] = c.adapt.lr;
  a["lambdas"] = c.adapt.lambdas;
  a["beta"] = c.adapt.beta;
  a["k"] = c.adapt.k;
  a["weights"] = {{"global", c.adapt.weights.global},
                  {"local", c.adapt.weights.local},
                  {"style", c.adapt.weights.style}};
  a["mode"] = c.mode;
  a["source_lambda"] = c.adapt.source_lambda;
  a["update"] = c.adapt.update;
  j["adapt"] = a;
  j["bank"] = {{"size", c.bank_size}, {"score_subset", c.score_subset}};
  return j;
}

RunConfig RunConfigFromJson(const nlohmann::json& json) {
  RunConfig c;
  auto& p = c.paths;
  auto& t = c.train;
  auto& a = c.adapt;
  ApplyKeys(json, "",
            {{"seed", Set(c.seed)},
             {"num_classes", Set(c.num_classes)},
             {"paths",
              [&](const Json& v) {
                ApplyKeys(v, "paths",
                          {{"train_images", Set(p.train_images)},
                           {"train_labels", Set(p.train_labels)},
                           {"val_images", Set(p.val_images)},
                           {"val_labels", Set(p.val_labels)},
                           {"test_images", Set(p.test_images)},
                           {"test_labels", Set(p.test_labels)},
                           {"bank_dir", Set(p.bank_dir)},
                           {"checkpoint", Set(p.checkpoint)},
                           {"output_dir", Set(p.output_dir)}});
              }},
             {"train",
              [&](const Json& v) {
                ApplyKeys(v, "train",
                          {{"epochs", Set(t.epochs)},
                           {"batch_size", Set(t.batch_size)},
                           {"lr", Set(t.lr)},
                           {"weight_decay", Set(t.weight_decay)},
                           {"flip_prob", Set(t.flip_prob)},
                           {"max_rotation_deg", Set(t.max_rotation_deg)},
                           {"contrast_min", Set(t.contrast_min)},
                           {"contrast_max", Set(t.contrast_max)}});
              }},
             {"adapt",
              [&](const Json& v) {
                ApplyKeys(v, "adapt",
                          {{"lr", Set(a.lr)},
                           {"lambdas", Set(a.lambdas)},
                           {"beta", Set(a.beta)},
                           {"k", Set(a.k)},
                           {"weights",
                            [&](const Json& w) {
                              ApplyKeys(w, "adapt.weights",
                                        {{"global", Set(a.weights.global)},
                                         {"local", Set(a.weights.local)},
                                         {"style", Set(a.weights.style)}});
                            }},
                           {"mode", Set(c.mode)},
                           {"source_lambda", Set(a.source_lambda)},
                           {"update", Set(a.update)}});
              }},
             {"bank", [&](const Json& v) {
                ApplyKeys(v, "bank", {{"size", Set(c.bank_size)}, {"score_subset", Set(c.score_subset)}});
              }}});
  if (c.mode != "online" && c.mode != "episodic" && c.mode != "both") {
    throw Error("config: adapt.mode must be online, episodic or both");
  }
  if (c.mode != "both") a.mode = ParseAdaptMode(c.mode);
  c.PropagateSeed();
  return c;
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  return RunConfigFromJson(j);
}

std::string RunId(const nlohmann::ordered_json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ftta
