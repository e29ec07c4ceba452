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

#include "ftta/spectral.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace ftta {
namespace {

using Complex = std::complex<double>;

bool IsPowerOfTwo(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void Radix2(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    std::vector<Complex> twiddle(half);
    for (std::size_t k = 0; k < half; ++k) {
      twiddle[k] = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                                       static_cast<double>(len));
    }
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const Complex u = a[start + k];
        const Complex v = a[start + k + half] * twiddle[k];
        a[start + k] = u + v;
        a[start + k + half] = u - v;
      }
    }
  }
}

void Direct(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex s = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce k*t mod n first so the angle stays small and exact.
      const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) /
                           static_cast<double>(n);
      s += a[t] * std::polar(1.0, angle);
    }
    out[k] = s;
  }
  a = std::move(out);
}

void Transform2d(std::vector<Complex>& data, std::size_t height, std::size_t width,
                 bool inverse) {
  std::vector<Complex> line(width);
  for (std::size_t y = 0; y < height; ++y) {
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(y * width), width, line.begin());
    Dft1d(line, inverse);
    std::copy(line.begin(), line.end(), data.begin() + static_cast<std::ptrdiff_t>(y * width));
  }
  line.resize(height);
  for (std::size_t x = 0; x < width; ++x) {
    for (std::size_t y = 0; y < height; ++y) line[y] = data[y * width + x];
    Dft1d(line, inverse);
    for (std::size_t y = 0; y < height; ++y) data[y * width + x] = line[y];
  }
}

void RequireFinite(const Grid& g, const char* what) {
  for (double v : g.values) {
    if (!std::isfinite(v)) throw Error(std::string(what) + ": non-finite value");
  }
}

}  // namespace

Grid::Grid(std::size_t h, std::size_t w, std::vector<double> v)
    : height(h), width(w), values(std::move(v)) {
  if (values.size() != h * w) throw ShapeError("Grid", Shape{h, w}, Shape{values.size()});
}

std::size_t LowPassMask::count() const {
  return static_cast<std::size_t>(std::count(mask.values.begin(), mask.values.end(), 1.0));
}

void Dft1d(std::vector<Complex>& data, bool inverse) {
  if (data.size() <= 1) return;
  if (IsPowerOfTwo(data.size())) {
    Radix2(data, inverse);
  } else {
    Direct(data, inverse);
  }
}

std::vector<Complex> Dft2d(const Grid& image) {
  std::vector<Complex> data(image.values.begin(), image.values.end());
  Transform2d(data, image.height, image.width, false);
  return data;
}

ComplexSpectrum Fft2(const Grid& image) {
  if (image.height < 2 || image.width < 2) {
    throw Error("fft2: image must be at least 2x2, got " + std::to_string(image.height) + "x" +
                std::to_string(image.width));
  }
  RequireFinite(image, "fft2");
  const std::size_t h = image.height, w = image.width;
  const auto data = Dft2d(image);
  ComplexSpectrum spec{Grid(h, w), Grid(h, w)};
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      const Complex c = data[u * w + v];
      const std::size_t y = (u + h / 2) % h, x = (v + w / 2) % w;
      spec.amplitude.at(y, x) = std::abs(c);
      double p = std::arg(c);
      if (p <= -std::numbers::pi) p = std::numbers::pi;
      spec.phase.at(y, x) = p;
    }
  }
  return spec;
}

InverseResult Ifft2(const ComplexSpectrum& spectrum) {
  if (!spectrum.amplitude.SameShape(spectrum.phase)) {
    throw ShapeError("ifft2", Shape{spectrum.amplitude.height, spectrum.amplitude.width},
                     Shape{spectrum.phase.height, spectrum.phase.width});
  }
  const std::size_t h = spectrum.height(), w = spectrum.width();
  std::vector<Complex> data(h * w);
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      const std::size_t y = (u + h / 2) % h, x = (v + w / 2) % w;
      data[u * w + v] = std::polar(spectrum.amplitude.at(y, x), spectrum.phase.at(y, x));
    }
  }
  Transform2d(data, h, w, true);
  InverseResult result{Grid(h, w)};
  const double scale = 1.0 / static_cast<double>(h * w);
  for (std::size_t i = 0; i < data.size(); ++i) {
    result.image.values[i] = data[i].real() * scale;
    result.imaginary_residue = std::max(result.imaginary_residue, std::abs(data[i].imag() * scale));
  }
  result.residue_warning = result.imaginary_residue > kResidueWarning;
  return result;
}

LowPassMask MakeMask(std::size_t height, std::size_t width, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) {
    throw Error("mask radius fraction must lie in (0, 1), got " + std::to_string(beta));
  }
  LowPassMask m;
  m.beta = beta;
  m.radius = beta * static_cast<double>(std::min(height, width)) / 2.0;
  m.mask = Grid(height, width);
  const double cy = static_cast<double>(height / 2), cx = static_cast<double>(width / 2);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      if (std::sqrt(dy * dy + dx * dx) < m.radius) m.mask.at(y, x) = 1.0;
    }
  }
  return m;
}

Grid TransferAmplitude(const Grid& target, const Grid& style, double lambda,
                       const LowPassMask& mask) {
  if (!target.SameShape(style) || !target.SameShape(mask.mask)) {
    throw ShapeError("transfer_amplitude", Shape{target.height, target.width},
                     Shape{style.height, style.width});
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error("interpolation coefficient must lie in [0, 1], got " + std::to_string(lambda));
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target.values[i] < 0.0 || style.values[i] < 0.0) {
      throw Error("transfer_amplitude: negative amplitude");
    }
  }
  Grid out = target;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask.mask.values[i] == 0.0) continue;
    const double a = target.values[i], s = style.values[i];
    // Endpoints and equal inputs are reproduced exactly.
    if (lambda == 1.0) {
      out.values[i] = s;
    } else if (lambda != 0.0) {
      out.values[i] = a + lambda * (s - a);
    }
  }
  return out;
}

Grid Stylize(const Grid& image, const Grid& style, double lambda, double beta,
             StylizeOptions options) {
  const LowPassMask mask = MakeMask(image.height, image.width, beta);
  return Stylize(image, Fft2(image), style, lambda, mask, options);
}

Grid Stylize(const Grid& image, const ComplexSpectrum& spectrum, const Grid& style,
             double lambda, const LowPassMask& mask, StylizeOptions options) {
  if (!image.SameShape(style)) {
    throw ShapeError("stylize", Shape{image.height, image.width}, Shape{style.height, style.width});
  }
  Grid amplitude = TransferAmplitude(spectrum.amplitude, style, lambda, mask);
  Grid out;
  if (amplitude == spectrum.amplitude) {
    // Nothing transferred: skip the lossy round trip.
    out = image;
  } else {
    out = Ifft2(ComplexSpectrum{std::move(amplitude), spectrum.phase}).image;
  }
  if (options.clamp) {
    for (double& v : out.values) v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

Grid LowBandAmplitude(const Grid& image, const LowPassMask& mask) {
  Grid amplitude = Fft2(image).amplitude;
  if (!amplitude.SameShape(mask.mask)) {
    throw ShapeError("low_band_amplitude", Shape{image.height, image.width},
                     Shape{mask.mask.height, mask.mask.width});
  }
  for (std::size_t i = 0; i < amplitude.size(); ++i) amplitude.values[i] *= mask.mask.values[i];
  return amplitude;
}

double MaskedDistance(const Grid& a, const Grid& b, const LowPassMask& mask) {
  if (!a.SameShape(b) || !a.SameShape(mask.mask)) {
    throw ShapeError("masked_distance", Shape{a.height, a.width}, Shape{b.height, b.width});
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (mask.mask.values[i] == 0.0) continue;
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace ftta
