#include <gtest/gtest.h>

#include <random>

#include "armanet/fft.hpp"
#include "test_support.hpp"

namespace armanet {
namespace {

using testing::naive_dft;
using testing::naive_dft2;
using testing::random_field;

TEST(Fft, ImpulseTransformsToConstant) {
  FftPlan plan(4);
  const std::vector<Complex> x{1, 0, 0, 0};
  for (const Complex& v : dft1(x, plan)) {
    EXPECT_NEAR(v.real(), 1.0, 1e-15);
    EXPECT_NEAR(v.imag(), 0.0, 1e-15);
  }
}

TEST(Fft, ShiftedImpulseMatchesNaiveDft) {
  FftPlan plan(4);
  const std::vector<Complex> x{0, 1, 0, 0};
  const auto got = dft1(x, plan);
  const std::vector<Complex> want{{1, 0}, {0, -1}, {-1, 0}, {0, 1}};
  const auto oracle = naive_dft(x);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(std::abs(got[k] - want[k]), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(oracle[k] - want[k]), 0.0, 1e-15);
  }
}

TEST(Fft, RoundTripOddLength) {
  FftPlan plan(3);
  const std::vector<Complex> x{0.3, -1.2, 4.5};
  const auto back = idft1(dft1(x, plan), plan);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(std::abs(back[i] - x[i]), 0.0, 1e-12);
}

TEST(Fft, LengthMismatchIsUsageError) {
  FftPlan plan(8);
  const std::vector<Complex> x(7);
  EXPECT_THROW(dft1(x, plan), UsageError);
  EXPECT_THROW(FftPlan(0), UsageError);
}

TEST(Fft, FactorizationAndBluesteinSelection) {
  EXPECT_EQ(FftPlan(16).radices(), (std::vector<std::size_t>{4, 4}));
  EXPECT_EQ(FftPlan(12).radices(), (std::vector<std::size_t>{4, 3}));
  EXPECT_EQ(FftPlan(30).radices(), (std::vector<std::size_t>{2, 3, 5}));
  EXPECT_FALSE(FftPlan(13 * 8).uses_bluestein());
  EXPECT_TRUE(FftPlan(17).uses_bluestein());
  EXPECT_TRUE(FftPlan(31).uses_bluestein());
  EXPECT_TRUE(FftPlan(2 * 37).uses_bluestein());
}

TEST(Fft, MatchesNaiveDftAcrossLengths) {
  std::mt19937_64 rng(11);
  for (std::size_t n = 1; n <= 70; ++n) {
    std::vector<Complex> x(n);
    for (auto& v : x) v = {testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1)};
    FftPlan plan(n);
    const auto got = plan.forward(x);
    const auto want = naive_dft(x);
    double err = 0.0;
    for (std::size_t k = 0; k < n; ++k) err = std::max(err, std::abs(got[k] - want[k]));
    EXPECT_LT(err, 1e-11) << "n = " << n;
  }
}

TEST(Fft, RoundTripLongSequences) {
  std::mt19937_64 rng(5);
  for (std::size_t n : {1024u, 997u, 2310u, 4096u, 4093u}) {
    std::vector<Complex> x(n);
    double norm = 0.0;
    for (auto& v : x) {
      v = {testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1)};
      norm = std::max(norm, std::abs(v));
    }
    FftPlan plan(n);
    const auto back = plan.inverse(plan.forward(x));
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(back[i] - x[i]));
    EXPECT_LT(err / norm, 1e-12) << "n = " << n;
  }
}

TEST(Dft2, ImpulseAndConstant) {
  FieldTensor impulse(4, 4, 1);
  impulse(0, 0) = 1.0;
  const SpectralTensor flat = dft2(impulse);
  for (const Complex& v : flat.data()) EXPECT_NEAR(std::abs(v - Complex(1.0)), 0.0, 1e-15);

  FieldTensor constant(4, 6, 1);
  for (double& v : constant.data()) v = 2.5;
  const SpectralTensor s = dft2(constant);
  for (std::size_t k1 = 0; k1 < 4; ++k1)
    for (std::size_t k2 = 0; k2 < 6; ++k2) {
      const Complex want = (k1 == 0 && k2 == 0) ? Complex(4 * 6 * 2.5) : Complex(0.0);
      EXPECT_NEAR(std::abs(s(k1, k2) - want), 0.0, 1e-12);
    }
}

TEST(Dft2, MatchesNaiveDoubleSum) {
  std::mt19937_64 rng(3);
  const FieldTensor x = random_field(8, 8, 3, rng);
  const SpectralTensor got = dft2(x);
  const SpectralTensor want = naive_dft2(x);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_LT(std::abs(got.data()[i] - want.data()[i]), 1e-9);
}

class Dft2Sizes : public ::testing::TestWithParam<std::size_t> {};

TEST_P(Dft2Sizes, RoundTripParsevalSymmetryLinearity) {
  const std::size_t n = GetParam();
  std::mt19937_64 rng(100 + n);
  const FieldTensor x = random_field(n, n + 1, 2, rng);
  const FieldTensor y = random_field(n, n + 1, 2, rng);
  const SpectralTensor sx = dft2(x);

  EXPECT_LT(max_abs_diff(idft2_real(sx), x), 1e-10);

  // Parseval, per channel.
  for (std::size_t c = 0; c < 2; ++c) {
    double spatial = 0.0, spectral = 0.0;
    for (std::size_t i1 = 0; i1 < x.height(); ++i1)
      for (std::size_t i2 = 0; i2 < x.width(); ++i2) {
        spatial += x(i1, i2, c) * x(i1, i2, c);
        spectral += std::norm(sx(i1, i2, c));
      }
    spectral /= static_cast<double>(x.height() * x.width());
    EXPECT_NEAR(spectral / spatial, 1.0, 1e-9);
  }

  // Conjugate symmetry for real input.
  const std::size_t h = x.height(), w = x.width();
  for (std::size_t k1 = 0; k1 < h; ++k1)
    for (std::size_t k2 = 0; k2 < w; ++k2)
      for (std::size_t c = 0; c < 2; ++c)
        EXPECT_LT(std::abs(sx(k1, k2, c) - std::conj(sx((h - k1) % h, (w - k2) % w, c))), 1e-10);

  // Linearity.
  const double a = 0.7, b = -1.3;
  const SpectralTensor combo = dft2(a * x + b * y);
  const SpectralTensor sy = dft2(y);
  for (std::size_t i = 0; i < combo.size(); ++i)
    EXPECT_LT(std::abs(combo.data()[i] - (a * sx.data()[i] + b * sy.data()[i])), 1e-10);
}

INSTANTIATE_TEST_SUITE_P(MixedRadixAndBluestein, Dft2Sizes,
                         ::testing::Values(3, 4, 5, 6, 7, 8, 12, 16, 31));

}  // namespace
}  // namespace armanet
