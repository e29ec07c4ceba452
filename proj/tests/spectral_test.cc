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

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "test_util.h"

namespace ftta {
namespace {

using testing::RandomGrid;

TEST(Fft2, TwoByTwoMatchesHandDft) {
  const Grid x(2, 2, {1, 2, 3, 4});
  const auto f = Dft2d(x);
  EXPECT_NEAR(f[0].real(), 10, 1e-12);
  EXPECT_NEAR(f[1].real(), -2, 1e-12);
  EXPECT_NEAR(f[2].real(), -4, 1e-12);
  EXPECT_NEAR(std::abs(f[3]), 0, 1e-12);
  const ComplexSpectrum s = Fft2(x);
  // Center shift for 2x2 swaps both axes: DC lands at (1, 1).
  EXPECT_NEAR(s.amplitude.at(1, 1), 10, 1e-12);
  EXPECT_NEAR(s.amplitude.at(1, 0), 2, 1e-12);
  EXPECT_NEAR(s.amplitude.at(0, 1), 4, 1e-12);
  EXPECT_NEAR(s.amplitude.at(0, 0), 0, 1e-12);
}

TEST(Fft2, ConstantImageHasOnlyDc) {
  const double c = 0.37;
  const ComplexSpectrum s = Fft2(Grid(8, 6, c));
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 6; ++x) {
      const double expect = (y == 4 && x == 3) ? c * 48 : 0.0;
      EXPECT_NEAR(s.amplitude.at(y, x), expect, 1e-12);
    }
}

TEST(Fft2, MatchesDirectDftOnSeveralSizes) {
  std::mt19937_64 rng(8);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {6, 10}, {7, 5}, {4, 16}}) {
    const Grid x = RandomGrid(h, w, rng);
    const auto oracle = testing::NaiveDft2(x);
    const ComplexSpectrum s = Fft2(x);
    for (std::size_t u = 0; u < h; ++u)
      for (std::size_t v = 0; v < w; ++v) {
        const std::size_t at = testing::ShiftedIndex(u, v, h, w);
        const auto z = std::polar(s.amplitude.values[at], s.phase.values[at]);
        EXPECT_LT(std::abs(z - oracle[u * w + v]), 1e-9) << h << "x" << w;
      }
  }
}

TEST(Fft2, PhaseInHalfOpenInterval) {
  std::mt19937_64 rng(4);
  const ComplexSpectrum s = Fft2(RandomGrid(16, 16, rng, -1, 1));
  for (std::size_t i = 0; i < s.phase.size(); ++i) {
    EXPECT_GT(s.phase.values[i], -std::numbers::pi);
    EXPECT_LE(s.phase.values[i], std::numbers::pi);
    EXPECT_GE(s.amplitude.values[i], 0.0);
  }
}

TEST(Fft2, RejectsNonFiniteAndTinyImages) {
  Grid x(4, 4, 0.5);
  x.at(1, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(Fft2(x), Error);
  EXPECT_THROW(Fft2(Grid(1, 4, 0.0)), Error);
}

TEST(Ifft2, RoundTripAndDcOnly) {
  std::mt19937_64 rng(16);
  const Grid x = RandomGrid(16, 16, rng);
  const InverseResult r = Ifft2(Fft2(x));
  EXPECT_LT(testing::MaxAbsDiff(r.image.values, x.values), 1e-9);
  EXPECT_FALSE(r.residue_warning);

  ComplexSpectrum dc{Grid(8, 8), Grid(8, 8)};
  dc.amplitude.at(4, 4) = 0.25 * 64;
  const InverseResult c = Ifft2(dc);
  for (double v : c.image.values) EXPECT_NEAR(v, 0.25, 1e-12);
}

TEST(Ifft2, ShapeMismatchAndResidueWarning) {
  EXPECT_THROW(Ifft2(ComplexSpectrum{Grid(4, 4), Grid(4, 2)}), Error);
  // A lone off-center bin has no conjugate partner: the inverse is complex.
  ComplexSpectrum s{Grid(8, 8), Grid(8, 8)};
  s.amplitude.at(4, 5) = 10.0;
  const InverseResult r = Ifft2(s);
  EXPECT_TRUE(r.residue_warning);
  EXPECT_GT(r.imaginary_residue, 1e-6);
}

TEST(Spectral, RoundTripAndParsevalOverSizes) {
  std::mt19937_64 rng(99);
  for (std::size_t n : {4, 8, 16, 28, 32, 64}) {
    const Grid x = RandomGrid(n, n, rng, -1, 1);
    const ComplexSpectrum s = Fft2(x);
    EXPECT_LT(testing::MaxAbsDiff(Ifft2(s).image.values, x.values), 1e-9) << n;
    double e_freq = 0.0, e_space = 0.0;
    for (double a : s.amplitude.values) e_freq += a * a;
    for (double v : x.values) e_space += v * v;
    EXPECT_NEAR(e_freq / (n * n * e_space), 1.0, 1e-9) << n;
  }
}

std::size_t BruteForceDisc(std::size_t h, std::size_t w, double beta) {
  const double r = beta * static_cast<double>(std::min(h, w)) / 2.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dy = static_cast<double>(y) - static_cast<double>(h / 2);
      const double dx = static_cast<double>(x) - static_cast<double>(w / 2);
      if (std::hypot(dy, dx) < r) ++count;
    }
  return count;
}

TEST(MakeMask, TinyBetaKeepsOnlyDc) {
  const LowPassMask m = MakeMask(28, 28, 1e-6);
  EXPECT_EQ(m.count(), 1u);
  EXPECT_EQ(m.mask.at(14, 14), 1.0);
}

TEST(MakeMask, NearlyFullDiscOnFourByFour) {
  const LowPassMask m = MakeMask(4, 4, 0.99);
  EXPECT_NEAR(m.radius, 1.98, 1e-12);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      const bool inside = std::hypot(double(y) - 2.0, double(x) - 2.0) < 1.98;
      EXPECT_EQ(m.mask.at(y, x), inside ? 1.0 : 0.0);
    }
}

TEST(MakeMask, CountMatchesBruteForceAndIsMonotone) {
  EXPECT_EQ(MakeMask(64, 64, 0.1).count(), BruteForceDisc(64, 64, 0.1));
  std::size_t previous = 0;
  for (double beta = 0.02; beta < 1.0; beta += 0.02) {
    const LowPassMask m = MakeMask(32, 24, beta);
    EXPECT_EQ(m.count(), BruteForceDisc(32, 24, beta));
    EXPECT_GE(m.count(), previous);
    previous = m.count();
  }
}

TEST(MakeMask, RadiallySymmetric) {
  const LowPassMask m = MakeMask(16, 16, 0.6);
  for (std::size_t y = 1; y < 16; ++y)
    for (std::size_t x = 1; x < 16; ++x) {
      EXPECT_EQ(m.mask.at(y, x), m.mask.at(16 - y, 16 - x));
      EXPECT_EQ(m.mask.at(y, x), m.mask.at(x, y));
    }
}

TEST(MakeMask, RejectsBetaOutsideOpenUnitInterval) {
  EXPECT_THROW(MakeMask(8, 8, 0.0), Error);
  EXPECT_THROW(MakeMask(8, 8, 1.0), Error);
  EXPECT_THROW(MakeMask(8, 8, -0.5), Error);
}

TEST(TransferAmplitude, Endpoints) {
  std::mt19937_64 rng(1);
  const Grid a = RandomGrid(8, 8, rng, 0, 5), s = RandomGrid(8, 8, rng, 0, 5);
  const LowPassMask m = MakeMask(8, 8, 0.5);
  EXPECT_EQ(TransferAmplitude(a, s, 0.0, m), a);
  LowPassMask all = m;
  all.mask = Grid(8, 8, 1.0);
  EXPECT_EQ(TransferAmplitude(a, s, 1.0, all), s);
}

TEST(TransferAmplitude, HalfwayInsideMaskTargetOutside) {
  const LowPassMask m = MakeMask(8, 8, 0.5);
  const Grid out = TransferAmplitude(Grid(8, 8, 4.0), Grid(8, 8, 8.0), 0.5, m);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_DOUBLE_EQ(out.values[i], m.mask.values[i] == 1.0 ? 6.0 : 4.0);
  }
}

TEST(TransferAmplitude, RejectsBadInputs) {
  const LowPassMask m = MakeMask(4, 4, 0.5);
  Grid neg(4, 4, 1.0);
  neg.at(0, 0) = -1.0;
  EXPECT_THROW(TransferAmplitude(neg, Grid(4, 4, 1.0), 0.5, m), Error);
  EXPECT_THROW(TransferAmplitude(Grid(4, 4, 1.0), Grid(4, 4, 1.0), 1.5, m), Error);
  EXPECT_THROW(TransferAmplitude(Grid(4, 4, 1.0), Grid(2, 4, 1.0), 0.5, m), Error);
}

TEST(Stylize, SelfTransferAndZeroLambdaAreIdentity) {
  std::mt19937_64 rng(12);
  const Grid x = RandomGrid(16, 16, rng);
  const Grid own = Fft2(x).amplitude;
  for (double lambda : {0.0, 0.3, 1.0}) {
    EXPECT_LT(testing::MaxAbsDiff(Stylize(x, own, lambda, 0.3).values, x.values), 1e-9);
  }
  const Grid other = Fft2(RandomGrid(16, 16, rng)).amplitude;
  EXPECT_EQ(Stylize(x, other, 0.0, 0.3), x);
}

TEST(Stylize, HalfwayLowBandAmplitudeIsMeanOfEndpoints) {
  std::mt19937_64 rng(13);
  const Grid x = RandomGrid(16, 16, rng);
  const Grid style = Fft2(RandomGrid(16, 16, rng)).amplitude;
  const LowPassMask m = MakeMask(16, 16, 0.3);
  const StylizeOptions raw{.clamp = false};
  const Grid half = Stylize(x, style, 0.5, 0.3, raw);
  const Grid full = Stylize(x, style, 1.0, 0.3, raw);
  EXPECT_GT(testing::MaxAbsDiff(half.values, full.values), 1e-3);
  const Grid a0 = Fft2(x).amplitude, a1 = Fft2(full).amplitude, ah = Fft2(half).amplitude;
  for (std::size_t i = 0; i < m.mask.size(); ++i) {
    if (m.mask.values[i] == 0.0) continue;
    EXPECT_NEAR(ah.values[i], 0.5 * (a0.values[i] + a1.values[i]), 1e-9);
  }
}

TEST(Stylize, PreservesPhaseBeforeClamping) {
  std::mt19937_64 rng(14);
  const Grid x = RandomGrid(16, 16, rng);
  const Grid style = Fft2(RandomGrid(16, 16, rng)).amplitude;
  const Grid out = Stylize(x, style, 0.7, 0.4, {.clamp = false});
  const ComplexSpectrum si = Fft2(x), so = Fft2(out);
  for (std::size_t i = 0; i < si.phase.size(); ++i) {
    if (si.amplitude.values[i] <= 1e-9 || so.amplitude.values[i] <= 1e-9) continue;
    double d = std::remainder(si.phase.values[i] - so.phase.values[i], 2.0 * std::numbers::pi);
    EXPECT_LT(std::abs(d), 1e-6);
  }
}

TEST(Stylize, ClampsToUnitInterval) {
  std::mt19937_64 rng(15);
  const Grid x = RandomGrid(8, 8, rng);
  Grid loud = Fft2(x).amplitude;
  for (double& v : loud.values) v *= 20.0;
  for (double v : Stylize(x, loud, 1.0, 0.5).values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Stylize, SwappedPairAtZeroLambdaRecoversOriginal) {
  // Two images exchanging low-band style, as in a style-swap figure.
  std::mt19937_64 rng(17);
  const Grid a = RandomGrid(32, 32, rng), b = RandomGrid(32, 32, rng);
  const LowPassMask m = MakeMask(32, 32, 0.1);
  const ComplexSpectrum sa = Fft2(a);
  const Grid swapped = TransferAmplitude(sa.amplitude, Fft2(b).amplitude, 0.0, m);
  const Grid back = Ifft2({swapped, sa.phase}).image;
  EXPECT_LT(testing::MaxAbsDiff(back.values, a.values), 1e-9);
}

TEST(LowBandAmplitude, ZeroOutsideMaskEqualToFftInside) {
  std::mt19937_64 rng(18);
  const Grid x = RandomGrid(16, 16, rng);
  const LowPassMask m = MakeMask(16, 16, 0.4);
  const Grid low = LowBandAmplitude(x, m), full = Fft2(x).amplitude;
  for (std::size_t i = 0; i < low.size(); ++i) {
    EXPECT_EQ(low.values[i], m.mask.values[i] == 1.0 ? full.values[i] : 0.0);
  }
  EXPECT_EQ(MaskedDistance(low, low, m), 0.0);
}

}  // namespace
}  // namespace ftta
