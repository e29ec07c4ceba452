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

#ifndef FTTA_SPECTRAL_H_
#define FTTA_SPECTRAL_H_

#include <complex>
#include <cstddef>
#include <vector>

#include "ftta/errors.h"

namespace ftta {

// Row-major 2-D grid of doubles: images, amplitude and phase maps, masks.
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}
  Grid(std::size_t h, std::size_t w, std::vector<double> v);

  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  std::size_t size() const { return values.size(); }
  bool SameShape(const Grid& other) const {
    return height == other.height && width == other.width;
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

// Centered spectrum: the DC bin sits at (height/2, width/2) (floor division).
struct ComplexSpectrum {
  Grid amplitude;  // >= 0
  Grid phase;      // (-pi, pi]

  std::size_t height() const { return amplitude.height; }
  std::size_t width() const { return amplitude.width; }
};

struct LowPassMask {
  double beta = 0.0;
  double radius = 0.0;  // beta * min(H, W) / 2
  Grid mask;            // 1 inside the open disc around the DC bin, 0 elsewhere

  std::size_t count() const;
};

struct InverseResult {
  Grid image;
  double imaginary_residue = 0.0;  // max |imag| of the inverse transform
  bool residue_warning = false;    // residue above 1e-6
};

inline constexpr double kResidueWarning = 1e-6;

// In-place 1-D DFT. Radix-2 for powers of two, direct summation otherwise.
// `inverse` flips the exponent sign; no normalization is applied.
void Dft1d(std::vector<std::complex<double>>& data, bool inverse);

// Unnormalized 2-D DFT in natural (unshifted) order.
std::vector<std::complex<double>> Dft2d(const Grid& image);

ComplexSpectrum Fft2(const Grid& image);
InverseResult Ifft2(const ComplexSpectrum& spectrum);

LowPassMask MakeMask(std::size_t height, std::size_t width, double beta);

// Amplitude interpolation inside the mask, identity outside:
//   ((1 - lambda) * target + lambda * style) o M + target o (1 - M)
Grid TransferAmplitude(const Grid& target, const Grid& style, double lambda,
                       const LowPassMask& mask);

struct StylizeOptions {
  bool clamp = true;  // clamp to [0, 1] after the inverse transform
};

// Replaces the low-band amplitude of `image` by interpolating toward `style`
// while keeping the phase of `image`.
Grid Stylize(const Grid& image, const Grid& style, double lambda, double beta,
             StylizeOptions options = {});

// Same, with a precomputed mask and spectrum of `image`.
Grid Stylize(const Grid& image, const ComplexSpectrum& spectrum, const Grid& style,
             double lambda, const LowPassMask& mask, StylizeOptions options = {});

// Amplitude of `image` with every bin outside the mask zeroed.
Grid LowBandAmplitude(const Grid& image, const LowPassMask& mask);

// L2 distance over the bins selected by the mask.
double MaskedDistance(const Grid& a, const Grid& b, const LowPassMask& mask);

}  // namespace ftta

#endif  // FTTA_SPECTRAL_H_
