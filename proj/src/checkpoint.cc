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

#include "ftta/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace ftta {
namespace {

constexpr char kMagic[4] = {'F', 'T', 'T', 'A'};

template <typename T>
void PutLE(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T GetLE() {
    Need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string GetString(std::size_t n) {
    Need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void Need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(FormatError::Kind::kTruncated, "tensor file truncated");
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> EncodeTensors(const std::vector<NamedTensor>& tensors) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  PutLE<std::uint32_t>(out, kTensorFileVersion);
  PutLE<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw Error("tensor name too long: " + name.substr(0, 32) + "...");
    }
    PutLE<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    if (tensor.rank() > 255) throw Error("tensor rank exceeds 255: " + name);
    out.push_back(static_cast<std::uint8_t>(tensor.rank()));
    for (std::size_t extent : tensor.shape()) {
      PutLE<std::uint32_t>(out, static_cast<std::uint32_t>(extent));
    }
    for (double v : tensor.data()) PutLE<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<NamedTensor> DecodeTensors(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, "tensor file: bad magic (expected FTTA)");
  }
  Reader reader(bytes);
  reader.GetString(4);
  const auto version = reader.GetLE<std::uint32_t>();
  if (version != kTensorFileVersion) {
    throw FormatError(FormatError::Kind::kBadVersion,
                      "tensor file: unsupported version " + std::to_string(version));
  }
  const auto count = reader.GetLE<std::uint32_t>();
  std::vector<NamedTensor> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = reader.GetLE<std::uint16_t>();
    std::string name = reader.GetString(name_len);
    const auto rank = reader.GetLE<std::uint8_t>();
    Shape shape;
    for (std::uint8_t r = 0; r < rank; ++r) {
      const auto extent = reader.GetLE<std::uint32_t>();
      if (extent == 0) throw FormatError(FormatError::Kind::kBadValue, "zero extent in " + name);
      shape.push_back(extent);
    }
    std::vector<double> values(NumElements(shape));
    for (double& v : values) v = std::bit_cast<double>(reader.GetLE<std::uint64_t>());
    tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (!reader.done()) {
    throw FormatError(FormatError::Kind::kCountMismatch, "tensor file: trailing bytes");
  }
  return tensors;
}

void WriteTensorFile(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const auto bytes = EncodeTensors(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<NamedTensor> ReadTensorFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return DecodeTensors(bytes);
}

const Tensor& FindTensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw Error("tensor '" + name + "' not found");
}

}  // namespace ftta
