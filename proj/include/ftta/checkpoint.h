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

#ifndef FTTA_CHECKPOINT_H_
#define FTTA_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ftta/optim.h"

namespace ftta {

// Flat little-endian tensor container:
//   "FTTA" | version u32 | count u32 |
//   per tensor: name_len u16 | name | rank u8 | extents u32 x rank | f64 x numel
inline constexpr std::uint32_t kTensorFileVersion = 1;

std::vector<std::uint8_t> EncodeTensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> DecodeTensors(const std::vector<std::uint8_t>& bytes);

void WriteTensorFile(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> ReadTensorFile(const std::filesystem::path& path);

// Looks up a tensor by name; throws if absent.
const Tensor& FindTensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace ftta

#endif  // FTTA_CHECKPOINT_H_
