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

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

namespace ftta {

std::size_t LabeledImageSet::NumClasses() const {
  if (labels.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

void LabeledImageSet::Validate(std::size_t num_classes) const {
  if (images.size() != labels.size()) throw Error("image and label counts differ");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i].SameShape(images[0])) throw Error("images differ in size");
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw Error("label " + std::to_string(labels[i]) + " out of range for " +
                  std::to_string(num_classes) + " classes");
    }
  }
}

LabeledImageSet LabeledImageSet::Subset(std::span<const std::size_t> indices) const {
  LabeledImageSet out{{}, {}, split, domain};
  for (std::size_t i : indices) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

// --- IDX ---------------------------------------------------------------------

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::uint32_t ReadBE32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (bytes.size() < offset + 4) {
    throw FormatError(FormatError::Kind::kTruncated, "idx: truncated header");
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void PutBE32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::vector<std::uint8_t> ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteFile(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

LabeledImageSet ParseIdx(std::span<const std::uint8_t> image_bytes,
                         std::span<const std::uint8_t> label_bytes) {
  if (ReadBE32(image_bytes, 0) != kIdxImages) {
    throw FormatError(FormatError::Kind::kBadMagic, "idx images: bad magic");
  }
  if (ReadBE32(label_bytes, 0) != kIdxLabels) {
    throw FormatError(FormatError::Kind::kBadMagic, "idx labels: bad magic");
  }
  const std::size_t count = ReadBE32(image_bytes, 4);
  const std::size_t rows = ReadBE32(image_bytes, 8);
  const std::size_t cols = ReadBE32(image_bytes, 12);
  const std::size_t label_count = ReadBE32(label_bytes, 4);
  if (count != label_count) {
    throw FormatError(FormatError::Kind::kCountMismatch,
                      "idx: " + std::to_string(count) + " images but " +
                          std::to_string(label_count) + " labels");
  }
  if (image_bytes.size() < 16 + count * rows * cols) {
    throw FormatError(FormatError::Kind::kTruncated, "idx images: truncated payload");
  }
  if (label_bytes.size() < 8 + count) {
    throw FormatError(FormatError::Kind::kTruncated, "idx labels: truncated payload");
  }
  LabeledImageSet set;
  set.images.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Grid g(rows, cols);
    const std::uint8_t* px = &image_bytes[16 + n * rows * cols];
    for (std::size_t i = 0; i < rows * cols; ++i) g.values[i] = px[i] / 255.0;
    set.images.push_back(std::move(g));
    set.labels.push_back(label_bytes[8 + n]);
  }
  return set;
}

LabeledImageSet LoadIdx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto image_bytes = ReadFile(images);
  const auto label_bytes = ReadFile(labels);
  return ParseIdx(image_bytes, label_bytes);
}

void SaveIdx(const LabeledImageSet& set, const std::filesystem::path& images,
             const std::filesystem::path& labels) {
  if (set.images.size() != set.labels.size()) throw Error("image and label counts differ");
  const std::size_t rows = set.empty() ? 0 : set.images[0].height;
  const std::size_t cols = set.empty() ? 0 : set.images[0].width;
  std::vector<std::uint8_t> img;
  PutBE32(img, kIdxImages);
  PutBE32(img, static_cast<std::uint32_t>(set.size()));
  PutBE32(img, static_cast<std::uint32_t>(rows));
  PutBE32(img, static_cast<std::uint32_t>(cols));
  for (const Grid& g : set.images) {
    if (g.height != rows || g.width != cols) throw Error("images differ in size");
    for (double v : g.values) {
      img.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    }
  }
  std::vector<std::uint8_t> lab;
  PutBE32(lab, kIdxLabels);
  PutBE32(lab, static_cast<std::uint32_t>(set.size()));
  for (int l : set.labels) {
    if (l < 0 || l > 255) throw Error("label does not fit in a byte: " + std::to_string(l));
    lab.push_back(static_cast<std::uint8_t>(l));
  }
  WriteFile(images, img);
  WriteFile(labels, lab);
}

// --- Synthetic shift ---------------------------------------------------------

LabeledImageSet SynthShift(const LabeledImageSet& set, const ShiftParams& params,
                           std::uint64_t seed) {
  if (!std::isfinite(params.gamma) || params.gamma <= 0.0) throw Error("shift: gamma must be > 0");
  if (!std::isfinite(params.sigma) || params.sigma < 0.0 || params.sigma > 0.3) {
    throw Error("shift: phase noise sigma must lie in [0, 0.3]");
  }
  if (!std::isfinite(params.contrast) || params.contrast <= 0.0) {
    throw Error("shift: contrast exponent must be > 0");
  }
  if (!(params.low_beta > 0.0 && params.low_beta < params.mid_beta && params.mid_beta <= 1.0)) {
    throw Error("shift: need 0 < low_beta < mid_beta <= 1");
  }
  LabeledImageSet out{{}, set.labels, set.split, "shifted"};
  out.images.reserve(set.size());
  for (std::size_t n = 0; n < set.size(); ++n) {
    const Grid& image = set.images[n];
    const std::size_t h = image.height, w = image.width;
    ComplexSpectrum spec = Fft2(image);
    const double half = static_cast<double>(std::min(h, w)) / 2.0;
    const double r_low = params.low_beta * half, r_mid = params.mid_beta * half;
    const std::size_t cy = h / 2, cx = w / 2;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(n)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) - static_cast<double>(cy);
        const double dx = static_cast<double>(x) - static_cast<double>(cx);
        const double dist = std::sqrt(dy * dy + dx * dx);
        if (dist < r_low) {
          spec.amplitude.at(y, x) *= params.gamma;
          continue;
        }
        if (dist >= r_mid || params.sigma == 0.0) continue;
        // Jitter conjugate pairs with opposite signs so the image stays real.
        const std::size_t py = (2 * cy + h - y) % h, px = (2 * cx + w - x) % w;
        const std::size_t idx = y * w + x, pidx = py * w + px;
        if (idx >= pidx) continue;
        const double jitter = params.sigma * noise(rng);
        spec.phase.values[idx] += jitter;
        spec.phase.values[pidx] -= jitter;
      }
    }
    Grid shifted = Ifft2(spec).image;
    for (double& v : shifted.values) {
      v = std::clamp(v, 0.0, 1.0);
      if (params.contrast != 1.0) v = std::pow(v, params.contrast);
    }
    out.images.push_back(std::move(shifted));
  }
  return out;
}

// --- Digit renderer ----------------------------------------------------------

namespace {

struct Point {
  double x, y;
};
using Stroke = std::vector<Point>;

Stroke Ellipse(double cx, double cy, double rx, double ry, double from = 0.0,
               double to = 2.0 * std::numbers::pi, int steps = 20) {
  Stroke s;
  for (int i = 0; i <= steps; ++i) {
    const double t = from + (to - from) * i / steps;
    s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return s;
}

// Glyph skeletons in a unit box, x to the right and y downwards.
std::vector<Stroke> Glyph(int digit) {
  switch (digit) {
    case 0: return {Ellipse(0.5, 0.5, 0.26, 0.38)};
    case 1: return {{{0.38, 0.25}, {0.52, 0.12}, {0.52, 0.88}}};
    case 2:
      return {{{0.26, 0.3}, {0.36, 0.15}, {0.55, 0.12}, {0.72, 0.22}, {0.72, 0.38},
               {0.26, 0.86}, {0.78, 0.86}}};
    case 3:
      return {{{0.26, 0.15}, {0.72, 0.15}, {0.46, 0.44}, {0.7, 0.54}, {0.73, 0.74},
               {0.55, 0.88}, {0.26, 0.82}}};
    case 4: return {{{0.66, 0.88}, {0.66, 0.12}, {0.2, 0.62}, {0.82, 0.62}}};
    case 5:
      return {{{0.76, 0.12}, {0.32, 0.12}, {0.28, 0.45}, {0.55, 0.4}, {0.74, 0.55},
               {0.7, 0.78}, {0.5, 0.88}, {0.25, 0.8}}};
    case 6:
      return {{{0.68, 0.12}, {0.42, 0.33}, {0.29, 0.6}, {0.33, 0.82}, {0.5, 0.88},
               {0.68, 0.78}, {0.68, 0.6}, {0.5, 0.5}, {0.3, 0.6}}};
    case 7: return {{{0.22, 0.12}, {0.78, 0.12}, {0.44, 0.88}}};
    case 8: return {Ellipse(0.5, 0.3, 0.2, 0.17), Ellipse(0.5, 0.68, 0.24, 0.2)};
    case 9:
      return {Ellipse(0.5, 0.32, 0.22, 0.2), {{0.72, 0.32}, {0.6, 0.88}}};
    default: throw Error("digit glyph out of range: " + std::to_string(digit));
  }
}

double SegmentDistance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

LabeledImageSet GenerateDigits(std::size_t count, std::size_t num_classes, std::size_t size,
                               std::uint64_t seed) {
  if (num_classes < 2 || num_classes > 10) throw Error("digits: num_classes must be in [2, 10]");
  if (size < 8) throw Error("digits: image size must be at least 8");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::normal_distribution<double> gauss(0.0, 1.0);

  LabeledImageSet set;
  set.domain = "clean";
  const double s = static_cast<double>(size);
  const double box = 0.75 * s;
  const double margin = (s - box) / 2.0;
  for (std::size_t n = 0; n < count; ++n) {
    const int label = static_cast<int>(n % num_classes);
    const double angle = uniform(-0.26, 0.26);
    const double sx = uniform(0.75, 1.05), sy = uniform(0.8, 1.05);
    const double shear = uniform(-0.2, 0.2);
    const double tx = uniform(-0.08, 0.08), ty = uniform(-0.08, 0.08);
    const double half_width = uniform(0.035, 0.06) * box;
    const double intensity = uniform(0.2, 0.4);
    // Smooth background: base level plus a linear illumination ramp.
    const double background = uniform(0.375, 0.525);
    const double ramp = uniform(0.0, 0.12), ramp_angle = uniform(0.0, 6.283185307179586);
    const double ca = std::cos(angle), sa = std::sin(angle);

    std::vector<Stroke> strokes = Glyph(label);
    for (Stroke& stroke : strokes) {
      for (Point& p : stroke) {
        const double jx = p.x + 0.02 * gauss(rng), jy = p.y + 0.02 * gauss(rng);
        // Affine jitter about the glyph center.
        double x = (jx - 0.5) * sx + shear * (jy - 0.5);
        double y = (jy - 0.5) * sy;
        const double rx = ca * x - sa * y, ry = sa * x + ca * y;
        p = {margin + (rx + 0.5 + tx) * box, margin + (ry + 0.5 + ty) * box};
      }
    }
    Grid g(size, size);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const Point p{static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5};
        double d = std::numeric_limits<double>::infinity();
        for (const Stroke& stroke : strokes) {
          for (std::size_t i = 0; i + 1 < stroke.size(); ++i) {
            d = std::min(d, SegmentDistance(p, stroke[i], stroke[i + 1]));
          }
        }
        const double coverage = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
        const double shade = ramp * ((p.x / s - 0.5) * std::cos(ramp_angle) +
                                     (p.y / s - 0.5) * std::sin(ramp_angle));
        g.at(y, x) =
            std::clamp(background + shade + intensity * coverage + 0.03 * gauss(rng), 0.0, 1.0);
      }
    }
    set.images.push_back(std::move(g));
    set.labels.push_back(label);
  }
  return set;
}

// --- PGM / CAM export --------------------------------------------------------

std::vector<std::uint8_t> EncodePgm(const Grid& image) {
  const std::string header =
      "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : image.values) {
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return out;
}

void WritePgm(const Grid& image, const std::filesystem::path& path) {
  WriteFile(path, EncodePgm(image));
}

Grid CamHeatmap(const CamMap& cam, std::size_t height, std::size_t width) {
  if (!cam.normalized) throw Error("export_cam: CAM is not normalized");
  const Grid& src = cam.grid;
  const double peak = *std::max_element(src.values.begin(), src.values.end());
  Grid out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * src.height / height;
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = x * src.width / width;
      out.at(y, x) = peak > 0.0 ? src.at(sy, sx) / peak : 0.0;
    }
  }
  return out;
}

ExportedCam ExportCam(const CamMap& cam, const Grid& base, const std::filesystem::path& path) {
  const Grid heat = CamHeatmap(cam, base.height, base.width);
  Grid composite(base.height, 2 * base.width);
  for (std::size_t y = 0; y < base.height; ++y) {
    for (std::size_t x = 0; x < base.width; ++x) {
      composite.at(y, x) = base.at(y, x);
      composite.at(y, base.width + x) = heat.at(y, x);
    }
  }
  ExportedCam out{path, path};
  out.composite.replace_filename(path.stem().string() + "_composite" + path.extension().string());
  WritePgm(heat, out.heatmap);
  WritePgm(composite, out.composite);
  return out;
}

}  // namespace ftta
