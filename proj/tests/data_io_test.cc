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


#include "ftta/data_io.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include <gtest/gtest.h>

#include "test_util.h"

namespace ftta {
namespace {

namespace fs = std::filesystem;
using Bytes = std::vector<std::uint8_t>;

Bytes Header(std::initializer_list<std::uint32_t> words) {
  Bytes out;
  for (std::uint32_t w : words)
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(w >> s));
  return out;
}

Bytes ReadAll(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

FormatError::Kind ParseKind(const Bytes& images, const Bytes& labels) {
  try {
    ParseIdx(images, labels);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no FormatError";
  return FormatError::Kind::kBadValue;
}

TEST(ParseIdx, HandcraftedFile) {
  Bytes images = Header({0x803, 2, 2, 3});
  for (std::uint8_t v : {0, 51, 102, 153, 204, 255, 255, 0, 1, 2, 3, 4}) images.push_back(v);
  Bytes labels = Header({0x801, 2});
  labels.push_back(7);
  labels.push_back(1);
  const LabeledImageSet set = ParseIdx(images, labels);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.images[0].height, 2u);
  EXPECT_EQ(set.images[0].width, 3u);
  EXPECT_EQ(set.images[0].at(0, 1), 0.2);
  EXPECT_EQ(set.images[0].at(1, 2), 1.0);
  EXPECT_EQ(set.images[1].at(1, 2), 4.0 / 255.0);
  EXPECT_EQ(set.labels, (std::vector<int>{7, 1}));
  EXPECT_EQ(set.NumClasses(), 8u);
}

TEST(ParseIdx, ErrorsAreDistinguishable) {
  Bytes images = Header({0x803, 2, 1, 1});
  images.push_back(1);
  images.push_back(2);
  Bytes labels = Header({0x801, 2});
  labels.push_back(0);
  labels.push_back(1);
  ASSERT_NO_THROW(ParseIdx(images, labels));

  EXPECT_EQ(ParseKind(Header({0x801, 2, 1, 1}), labels), FormatError::Kind::kBadMagic);
  EXPECT_EQ(ParseKind(images, Header({0x803, 2})), FormatError::Kind::kBadMagic);
  Bytes three = Header({0x801, 3});
  three.insert(three.end(), {0, 1, 2});
  EXPECT_EQ(ParseKind(images, three), FormatError::Kind::kCountMismatch);
  EXPECT_EQ(ParseKind(Bytes(images.begin(), images.end() - 1), labels), FormatError::Kind::kTruncated);
  EXPECT_EQ(ParseKind(images, Bytes(labels.begin(), labels.end() - 1)), FormatError::Kind::kTruncated);
  EXPECT_EQ(ParseKind(Bytes(images.begin(), images.begin() + 6), labels), FormatError::Kind::kTruncated);
  EXPECT_THROW(LoadIdx("/nonexistent/images.idx", "/nonexistent/labels.idx"), Error);
}

TEST(SaveIdx, RoundTripAndIndependentChecksum) {
  const LabeledImageSet set = GenerateDigits(100, 10, 20, 3);
  const fs::path dir = TempDir("ftta_idx");
  SaveIdx(set, dir / "img.idx", dir / "lbl.idx");

  // Independent reader over the raw bytes.
  const Bytes raw = ReadAll(dir / "img.idx");
  const Bytes raw_labels = ReadAll(dir / "lbl.idx");
  ASSERT_EQ(raw.size(), 16u + 100u * 400u);
  ASSERT_EQ(raw_labels.size(), 8u + 100u);
  std::uint64_t expect_sum = 0, label_sum = 0;
  for (const Grid& g : set.images)
    for (double v : g.values) expect_sum += static_cast<std::uint64_t>(std::lround(v * 255.0));
  std::uint64_t raw_sum = 0;
  for (std::size_t i = 16; i < raw.size(); ++i) raw_sum += raw[i];
  for (int l : set.labels) label_sum += static_cast<std::uint64_t>(l);
  std::uint64_t raw_label_sum = 0;
  for (std::size_t i = 8; i < raw_labels.size(); ++i) raw_label_sum += raw_labels[i];
  EXPECT_EQ(raw_sum, expect_sum);
  EXPECT_EQ(raw_label_sum, label_sum);

  const LabeledImageSet back = LoadIdx(dir / "img.idx", dir / "lbl.idx");
  ASSERT_EQ(back.size(), 100u);
  EXPECT_EQ(back.labels, set.labels);
  for (std::size_t n = 0; n < 100; ++n)
    for (std::size_t i = 0; i < 400; ++i)
      EXPECT_NEAR(back.images[n].values[i], set.images[n].values[i], 0.5 / 255.0 + 1e-12);

  // A second save of the quantized set is byte identical.
  SaveIdx(back, dir / "img2.idx", dir / "lbl2.idx");
  EXPECT_EQ(ReadAll(dir / "img2.idx"), raw);
}

TEST(GenerateDigits, DeterministicBalancedAndInRange) {
  const LabeledImageSet a = GenerateDigits(60, 6, 24, 11), b = GenerateDigits(60, 6, 24, 11);
  EXPECT_EQ(a.labels, b.labels);
  for (std::size_t n = 0; n < 60; ++n) EXPECT_EQ(a.images[n], b.images[n]);
  std::vector<int> counts(6, 0);
  for (int l : a.labels) ++counts[l];
  for (int c : counts) EXPECT_EQ(c, 10);
  for (const Grid& g : a.images) {
    EXPECT_EQ(g.height, 24u);
    for (double v : g.values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_NE(GenerateDigits(60, 6, 24, 12).images[0], a.images[0]);
  EXPECT_THROW(GenerateDigits(10, 1, 24, 0), Error);
  EXPECT_THROW(GenerateDigits(10, 11, 24, 0), Error);
}

LabeledImageSet SmoothSet(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LabeledImageSet set;
  for (std::size_t i = 0; i < n; ++i) {
    set.images.push_back(testing::RandomGrid(16, 16, rng, 0.3, 0.5));
    set.labels.push_back(static_cast<int>(i % 3));
  }
  return set;
}

TEST(SynthShift, IdentityParametersLeaveImagesUnchanged) {
  const LabeledImageSet set = SmoothSet(4, 1);
  const LabeledImageSet out = SynthShift(set, ShiftParams{}, 5);
  EXPECT_EQ(out.domain, "shifted");
  for (std::size_t n = 0; n < 4; ++n) {
    EXPECT_LT(testing::MaxAbsDiff(out.images[n].values, set.images[n].values), 1e-12);
  }
}

TEST(SynthShift, DeterministicAndLabelPreserving) {
  const LabeledImageSet set = SmoothSet(5, 2);
  const ShiftParams p{1.6, 0.15, 1.4};
  const LabeledImageSet a = SynthShift(set, p, 9), b = SynthShift(set, p, 9), c = SynthShift(set, p, 10);
  EXPECT_EQ(a.labels, set.labels);
  for (std::size_t n = 0; n < 5; ++n) EXPECT_EQ(a.images[n], b.images[n]);
  EXPECT_NE(a.images[0], c.images[0]);
  // Per-image streams: a prefix of the set shifts the same way.
  const std::vector<std::size_t> prefix = {0, 1};
  EXPECT_EQ(SynthShift(set.Subset(prefix), p, 9).images[1], a.images[1]);
}

TEST(SynthShift, GammaScalesLowBandAmplitude) {
  const LabeledImageSet set = SmoothSet(3, 3);
  ShiftParams p;
  p.gamma = 1.5;
  const LabeledImageSet out = SynthShift(set, p, 0);
  const LowPassMask low = MakeMask(16, 16, p.low_beta);
  for (std::size_t n = 0; n < 3; ++n) {
    const ComplexSpectrum before = Fft2(set.images[n]), after = Fft2(out.images[n]);
    for (std::size_t i = 0; i < before.amplitude.size(); ++i) {
      const double expect = low.mask.values[i] > 0 ? 1.5 * before.amplitude.values[i] : before.amplitude.values[i];
      EXPECT_NEAR(after.amplitude.values[i], expect, 1e-9);
    }
  }
}

TEST(SynthShift, RejectsBadParameters) {
  const LabeledImageSet set = SmoothSet(1, 4);
  EXPECT_THROW(SynthShift(set, {0.0, 0.0, 1.0}, 0), Error);
  EXPECT_THROW(SynthShift(set, {1.0, 0.5, 1.0}, 0), Error);
  EXPECT_THROW(SynthShift(set, {1.0, -0.1, 1.0}, 0), Error);
  EXPECT_THROW(SynthShift(set, {1.0, 0.0, 0.0}, 0), Error);
  EXPECT_THROW(SynthShift(set, {1.0, 0.0, 1.0, 0.6, 0.5}, 0), Error);
}

CamMap Cam(std::size_t h, std::size_t w, std::vector<double> values) {
  return {Grid(h, w, std::move(values)), true, false};
}

TEST(ExportCam, UniformCamIsConstantWhite) {
  const fs::path dir = TempDir("ftta_cam_uniform");
  const Grid base(8, 8, 0.5);
  const ExportedCam files = ExportCam(Cam(2, 2, {0.25, 0.25, 0.25, 0.25}), base, dir / "cam.pgm");
  const Bytes heat = ReadAll(files.heatmap);
  const std::string header = "P5\n8 8\n255\n";
  ASSERT_EQ(heat.size(), header.size() + 64);
  for (std::size_t i = header.size(); i < heat.size(); ++i) EXPECT_EQ(heat[i], 255);
  EXPECT_EQ(files.composite, dir / "cam_composite.pgm");
  EXPECT_EQ(ReadAll(files.composite).size(), std::string("P5\n16 8\n255\n").size() + 128);
}

TEST(ExportCam, OneHotCamLightsSingleBlock) {
  const Grid heat = CamHeatmap(Cam(2, 2, {0, 0, 1, 0}), 6, 6);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 6; ++x) EXPECT_EQ(heat.at(y, x), (y >= 3 && x < 3) ? 1.0 : 0.0);
}

TEST(ExportCam, HandComputedBytes) {
  const fs::path dir = TempDir("ftta_cam_bytes");
  const Grid base(2, 4, {0.0, 1.0, 0.5, 0.2, 0.1, 0.3, 0.6, 0.9});
  const ExportedCam files = ExportCam(Cam(1, 2, {0.3, 0.7}), base, dir / "c.pgm");
  const std::string header = "P5\n4 2\n255\n";
  Bytes expect(header.begin(), header.end());
  const std::uint8_t lo = static_cast<std::uint8_t>(std::lround(0.3 / 0.7 * 255.0));
  for (int row = 0; row < 2; ++row) expect.insert(expect.end(), {lo, lo, 255, 255});
  EXPECT_EQ(ReadAll(files.heatmap), expect);
  EXPECT_EQ(EncodePgm(Grid(1, 3, {-0.5, 0.5, 2.0})),
            (Bytes{'P', '5', '\n', '3', ' ', '1', '\n', '2', '5', '5', '\n', 0, 128, 255}));
}

TEST(ExportCam, RejectsUnnormalizedCamAndUnwritablePath) {
  CamMap raw = Cam(2, 2, {1, 2, 3, 4});
  raw.normalized = false;
  EXPECT_THROW(CamHeatmap(raw, 4, 4), Error);
  EXPECT_THROW(ExportCam(Cam(2, 2, {0.25, 0.25, 0.25, 0.25}), Grid(4, 4), "/nonexistent_dir/x/cam.pgm"), Error);
}

TEST(LabeledImageSet, ValidateAndSubset) {
  LabeledImageSet set = SmoothSet(4, 5);
  EXPECT_NO_THROW(set.Validate(3));
  EXPECT_THROW(set.Validate(2), Error);
  const std::vector<std::size_t> idx = {3, 1};
  const LabeledImageSet sub = set.Subset(idx);
  EXPECT_EQ(sub.labels, (std::vector<int>{0, 1}));
  EXPECT_EQ(sub.images[0], set.images[3]);
  set.labels.pop_back();
  EXPECT_THROW(set.Validate(3), Error);
}

}  // namespace
}  // namespace ftta
