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

#ifndef FTTA_DATA_IO_H_
#define FTTA_DATA_IO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ftta/classifier.h"
#include "ftta/spectral.h"

namespace ftta {

struct LabeledImageSet {
  std::vector<Grid> images;  // single channel, values in [0, 1]
  std::vector<int> labels;
  std::string split;   // train / val / test
  std::string domain;  // free-form tag, e.g. "clean" or "shifted"

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  // Largest label + 1, or 0 for an empty set.
  std::size_t NumClasses() const;
  // Throws unless all images share one size and labels are in range.
  void Validate(std::size_t num_classes) const;
  // Subset in the order given by `indices`.
  LabeledImageSet Subset(std::span<const std::size_t> indices) const;
};

// IDX files: images magic 0x00000803 (count, rows, cols, u8 pixels) and
// labels magic 0x00000801 (count, u8 labels), big-endian header fields.
LabeledImageSet ParseIdx(std::span<const std::uint8_t> image_bytes,
                         std::span<const std::uint8_t> label_bytes);
LabeledImageSet LoadIdx(const std::filesystem::path& images, const std::filesystem::path& labels);
// Pixels are rounded to 8 bits.
void SaveIdx(const LabeledImageSet& set, const std::filesystem::path& images,
             const std::filesystem::path& labels);

struct ShiftParams {
  double gamma = 1.0;     // low-band amplitude scale
  double sigma = 0.0;     // mid-band phase jitter (radians, std dev)
  double contrast = 1.0;  // pixel exponent applied after the spectral edit
  double low_beta = 0.1;  // low band: distance < low_beta * min(H, W) / 2
  double mid_beta = 0.5;  // mid band: low band edge .. mid_beta * min(H, W) / 2
};

// Synthetic appearance shift. Deterministic per (seed, image index); labels
// are preserved.
LabeledImageSet SynthShift(const LabeledImageSet& set, const ShiftParams& params,
                           std::uint64_t seed);

// Procedurally rendered handwritten-style digits (classes 0..num_classes-1)
// with random affine jitter, stroke width and intensity.
LabeledImageSet GenerateDigits(std::size_t count, std::size_t num_classes, std::size_t size,
                               std::uint64_t seed);

// Binary 8-bit PGM (P5) of a [0, 1] grid.
std::vector<std::uint8_t> EncodePgm(const Grid& image);
void WritePgm(const Grid& image, const std::filesystem::path& path);

// Nearest-neighbour upscale of `cam` to `height` x `width`, scaled so the
// largest CAM value maps to 1.
Grid CamHeatmap(const CamMap& cam, std::size_t height, std::size_t width);

struct ExportedCam {
  std::filesystem::path heatmap;
  std::filesystem::path composite;
};

// Writes the heat map to `path` and the base | heat side-by-side composite
// next to it with a "_composite" suffix.
ExportedCam ExportCam(const CamMap& cam, const Grid& base, const std::filesystem::path& path);

}  // namespace ftta

#endif  // FTTA_DATA_IO_H_
