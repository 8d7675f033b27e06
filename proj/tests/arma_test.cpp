#include <gtest/gtest.h>

#include <random>

#include "armanet/arma.hpp"
#include "test_support.hpp"

namespace armanet {
namespace {

using testing::central_differences;
using testing::random_field;
using testing::relative_error;

FieldTensor row(std::vector<double> values) {
  const std::size_t n = values.size();
  return FieldTensor({1, n, 1}, std::move(values));
}

MaKernel random_ma(std::size_t k, std::size_t t, std::size_t s, std::size_t d, std::mt19937_64& rng) {
  MaKernel w(k, k, t, s, d);
  for (double& v : w.values()) v = testing::uniform(rng, -1, 1);
  return w;
}

// beta in [-1, 1] keeps every factor's spectral margin above 1 - tanh(1) ~ 0.24,
// so losses stay small enough for h = 1e-5 central differences.
ReparamArKernel random_reparam(std::size_t t, std::size_t q, std::mt19937_64& rng) {
  ReparamArKernel k(t, q);
  for (auto& p : k.horizontal_storage()) p = {testing::uniform(rng, -1.5, 1.5), testing::uniform(rng, -1, 1)};
  for (auto& p : k.vertical_storage()) p = {testing::uniform(rng, -1.5, 1.5), testing::uniform(rng, -1, 1)};
  return k;
}

double half_square_norm(const FieldTensor& y) {
  double s = 0.0;
  for (double v : y.data()) s += 0.5 * v * v;
  return s;
}

// Dense matrix of the MA stage, assembled column by column from unit inputs
// using only the circular-convolution definition.
std::vector<std::vector<double>> assemble_ma(const MaKernel& w, std::size_t h, std::size_t wd) {
  const std::size_t n_in = h * wd * w.in_channels(), n_out = h * wd * w.out_channels();
  std::vector<std::vector<double>> m(n_out, std::vector<double>(n_in, 0.0));
  const long long d = static_cast<long long>(w.dilation());
  for (std::size_t t = 0; t < w.out_channels(); ++t)
    for (std::size_t s = 0; s < w.in_channels(); ++s)
      for (std::size_t i1 = 0; i1 < h; ++i1)
        for (std::size_t i2 = 0; i2 < wd; ++i2)
          for (int p1 = -w.half_height(); p1 <= w.half_height(); ++p1)
            for (int p2 = -w.half_width(); p2 <= w.half_width(); ++p2) {
              const std::size_t j1 = wrap_index(static_cast<long long>(i1) - d * p1, h);
              const std::size_t j2 = wrap_index(static_cast<long long>(i2) - d * p2, wd);
              m[(i1 * wd + i2) * w.out_channels() + t][(j1 * wd + j2) * w.in_channels() + s] += w.at(t, s, p1, p2);
            }
  return m;
}

// ----- MA stage -----

TEST(MaForward, DeltaKernelIsIdentity) {
  std::mt19937_64 rng(1);
  const FieldTensor x = random_field(5, 6, 1, rng);
  EXPECT_EQ(max_abs_diff(ma_forward(x, MaKernel::from_taps(Kernel2D::delta())), x), 0.0);
}

TEST(MaForward, OneDimensionalExample) {
  const FieldTensor y = ma_forward(row({1, 2, 3, 4}), MaKernel::from_taps(Kernel2D(1, 3, {0, 1, 1})));
  const std::vector<double> want{5, 3, 5, 7};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y(0, i), want[i]);
}

TEST(MaForward, MatchesDenseAssembly) {
  std::mt19937_64 rng(2);
  for (std::size_t d : {1u, 2u}) {
    const MaKernel w = random_ma(3, 3, 2, d, rng);
    const FieldTensor x = random_field(6, 6, 2, rng);
    const auto m = assemble_ma(w, 6, 6);
    const FieldTensor y = ma_forward(x, w);
    for (std::size_t r = 0; r < m.size(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < m[r].size(); ++c) acc += m[r][c] * x.data()[c];
      EXPECT_NEAR(y.data()[r], acc, 1e-10);
    }
  }
}

TEST(MaForward, ChannelMismatchIsUsageError) {
  std::mt19937_64 rng(3);
  EXPECT_THROW(ma_forward(random_field(4, 4, 3, rng), random_ma(3, 1, 2, 1, rng)), UsageError);
}

TEST(MaBackward, DeltaKernelPassesGradientThrough) {
  std::mt19937_64 rng(4);
  const FieldTensor x = random_field(4, 5, 1, rng);
  const FieldTensor dt = random_field(4, 5, 1, rng);
  const MaGradients g = ma_backward(dt, x, MaKernel::from_taps(Kernel2D::delta()));
  EXPECT_EQ(max_abs_diff(g.d_input, dt), 0.0);
}

TEST(MaBackward, TransposeOfOneDimensionalExample) {
  FieldTensor dt(1, 4, 1);
  dt(0, 0) = 1.0;
  const MaGradients g = ma_backward(dt, row({1, 2, 3, 4}), MaKernel::from_taps(Kernel2D(1, 3, {0, 1, 1})));
  const std::vector<double> want{1, 0, 0, 1};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(g.d_input(0, i), want[i]);
}

TEST(MaBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const MaKernel w = random_ma(3, 2, 3, 2, rng);
  const FieldTensor x = random_field(6, 7, 3, rng);
  const FieldTensor weight = random_field(6, 7, 2, rng);
  auto loss_x = [&](const std::vector<double>& v) {
    const FieldTensor y = ma_forward(FieldTensor(x.shape(), v), w);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weight.data()[i] * y.data()[i];
    return s;
  };
  auto loss_w = [&](const std::vector<double>& v) {
    MaKernel k = w;
    k.values() = v;
    const FieldTensor y = ma_forward(x, k);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weight.data()[i] * y.data()[i];
    return s;
  };
  const MaGradients g = ma_backward(weight, x, w);
  const auto nx = central_differences(loss_x, std::vector<double>(x.data().begin(), x.data().end()), 1e-5);
  const auto nw = central_differences(loss_w, w.values(), 1e-5);
  for (std::size_t i = 0; i < nx.size(); ++i) EXPECT_LT(relative_error(g.d_input.data()[i], nx[i]), 1e-6);
  for (std::size_t i = 0; i < nw.size(); ++i) EXPECT_LT(relative_error(g.d_kernel.values()[i], nw[i]), 1e-6);
}

// ----- AR stage -----

SeparableArKernel causal_horizontal(double a) {
  SeparableArKernel k(1, 1);
  k.horizontal(0, 0) = {0.0, 1.0, -a};
  return k;
}

TEST(ArForward, DeltaKernelIsIdentity) {
  std::mt19937_64 rng(6);
  const FieldTensor t = random_field(5, 7, 2, rng);
  EXPECT_LT(max_abs_diff(ar_forward(t, SeparableArKernel(2, 1)).output, t), 1e-14);
}

TEST(ArForward, GeometricOneDimensionalExample) {
  FieldTensor t(1, 4, 1);
  t(0, 0) = 1.0;
  const FieldTensor y = ar_forward(t, causal_horizontal(0.5)).output;
  const FieldTensor dense = ar_forward_dense(t, causal_horizontal(0.5));
  for (std::size_t i = 0; i < 4; ++i) {
    const double closed_form = std::pow(0.5, static_cast<double>(i)) / (1.0 - std::pow(0.5, 4.0));
    EXPECT_NEAR(y(0, i), closed_form, 1e-12);
    EXPECT_NEAR(dense(0, i), closed_form, 1e-10);
  }
  EXPECT_NEAR(y(0, 0), 1.06667, 1e-5);
  EXPECT_NEAR(y(0, 3), 0.13333, 1e-5);
}

TEST(ArForward, MatchesDenseSolveOnRandomStableKernels) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = 5 + static_cast<std::size_t>(trial % 5), w = 5 + static_cast<std::size_t>(trial % 4);
    const std::size_t q = 1 + static_cast<std::size_t>(trial % 2);
    const SeparableArKernel ar = random_reparam(2, q, rng).materialize();
    const FieldTensor t = random_field(h, w, 2, rng);
    EXPECT_LT(max_abs_diff(ar_forward(t, ar).output, ar_forward_dense(t, ar)), 1e-8);
  }
}

TEST(ArForward, SeparableSpectrumMatchesEmbeddedKernel) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t q = 1 + static_cast<std::size_t>(trial % 2);
    const std::size_t h = 2 * q + 1 + static_cast<std::size_t>(trial % 7), w = 2 * q + 2 + static_cast<std::size_t>(trial % 5);
    const SeparableArKernel ar = random_reparam(3, q, rng).materialize();
    const FieldTensor t = random_field(h, w, 3, rng);
    const ArForwardResult separable = ar_forward(t, ar);
    const ArForwardResult general = ar_forward(t, materialize_all(ar));
    EXPECT_LT(max_abs_diff(separable.output, general.output), 1e-12);
    double spectrum_gap = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
      spectrum_gap = std::max(spectrum_gap, std::abs(separable.cache.kernel_spectrum.data()[i] -
                                                     general.cache.kernel_spectrum.data()[i]));
    EXPECT_LT(spectrum_gap, 1e-12);
  }
}

TEST(ArSolve, MatchesCachedForward) {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 10; ++trial) {
    const SeparableArKernel ar = random_reparam(2, 1 + static_cast<std::size_t>(trial % 2), rng).materialize();
    const FieldTensor t = random_field(9, 12, 2, rng);
    EXPECT_LT(max_abs_diff(ar_solve(t, ar), ar_forward(t, ar).output), 1e-13);
  }
  SeparableArKernel singular(1, 1);
  singular.horizontal(0, 0) = {0.5, 1.0, 0.5};
  EXPECT_THROW(ar_solve(random_field(4, 4, 1, rng), singular), SingularSpectrumError);
}

TEST(ArForward, SingularKernelRaises) {
  SeparableArKernel k(1, 1);
  k.horizontal(0, 0) = {0.5, 1.0, 0.5};  // 1 + cos(w) vanishes at w = pi on even grids
  std::mt19937_64 rng(8);
  EXPECT_THROW(ar_forward(random_field(4, 4, 1, rng), k), SingularSpectrumError);
  EXPECT_THROW(ar_forward_dense(random_field(4, 4, 1, rng), k), SingularSpectrumError);
}

TEST(ArForwardDense, DeltaKernelAndSizeGuard) {
  std::mt19937_64 rng(9);
  const FieldTensor t = random_field(3, 4, 1, rng);
  EXPECT_LT(max_abs_diff(ar_forward_dense(t, SeparableArKernel(1, 1)), t), 1e-14);
  EXPECT_THROW(ar_forward_dense(FieldTensor(65, 64, 1), SeparableArKernel(1, 1)), UsageError);
}

TEST(ArForward, AcceptsGeneralNonSeparableKernels) {
  std::mt19937_64 rng(10);
  Kernel2D k(3, 3);
  for (double& v : k.taps()) v = testing::uniform(rng, -0.1, 0.1);
  k.at(0, 0) = 1.0;
  const std::vector<Kernel2D> kernels{k};
  const FieldTensor t = random_field(6, 6, 1, rng);
  EXPECT_LT(max_abs_diff(ar_forward(t, kernels).output, ar_forward_dense(t, kernels)), 1e-10);
}

TEST(ArBackward, DeltaKernelGivesCrossCorrelation) {
  std::mt19937_64 rng(11);
  const FieldTensor t = random_field(4, 5, 1, rng);
  const FieldTensor dy = random_field(4, 5, 1, rng);
  const ArForwardResult fwd = ar_forward(t, SeparableArKernel(1, 1));
  const ArBackwardResult g = ar_backward(dy, fwd.cache);
  EXPECT_LT(max_abs_diff(g.d_intermediate, dy), 1e-14);
  // -(Y star dY)(j) = -sum_i dY(i) Y(i - j)
  for (std::size_t j1 = 0; j1 < 4; ++j1)
    for (std::size_t j2 = 0; j2 < 5; ++j2) {
      double acc = 0.0;
      for (std::size_t i1 = 0; i1 < 4; ++i1)
        for (std::size_t i2 = 0; i2 < 5; ++i2) acc += dy(i1, i2) * fwd.output((i1 + 4 - j1) % 4, (i2 + 5 - j2) % 5);
      EXPECT_NEAR(g.d_kernel_field(j1, j2), -acc, 1e-13);
    }
}

TEST(ArBackward, TransposedGeometricExample) {
  FieldTensor t(1, 4, 1);
  t(0, 0) = 1.0;
  const ArForwardResult fwd = ar_forward(t, causal_horizontal(0.5));
  FieldTensor dy(1, 4, 1);
  dy(0, 0) = 1.0;
  const FieldTensor dt = ar_backward(dy, fwd.cache).d_intermediate;

  // Oracle: transpose of the circulant system y_i - 0.5 y_{i-1}.
  std::vector<std::vector<double>> at(4, std::vector<double>(4, 0.0));
  for (std::size_t i = 0; i < 4; ++i) {
    at[i][i] = 1.0;
    at[(i + 3) % 4][i] = -0.5;
  }
  const auto want = testing::solve_small(at, {1, 0, 0, 0});
  const std::vector<double> frozen{1.06667, 0.13333, 0.26667, 0.53333};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(dt(0, i), want[i], 1e-12);
    EXPECT_NEAR(dt(0, i), frozen[i], 1e-5);
  }
}

TEST(ArBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  const SeparableArKernel ar = random_reparam(1, 1, rng).materialize();
  const Kernel2D a = materialize_2d(ar, 0);
  const FieldTensor t = random_field(6, 6, 1, rng);

  const ArForwardResult fwd = ar_forward(t, ar);
  const ArBackwardResult g = ar_backward(fwd.output, fwd.cache);
  const Kernel2D da = restrict_to_taps(g.d_kernel_field, 0, 1, 1);

  auto loss_t = [&](const std::vector<double>& v) {
    return half_square_norm(ar_forward(FieldTensor(t.shape(), v), ar).output);
  };
  auto loss_a = [&](const std::vector<double>& v) {
    const std::vector<Kernel2D> ks{Kernel2D(3, 3, v)};
    return half_square_norm(ar_forward(t, ks).output);
  };
  const auto nt = central_differences(loss_t, std::vector<double>(t.data().begin(), t.data().end()), 1e-5);
  const auto na = central_differences(loss_a, a.taps(), 1e-5);
  for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_LT(relative_error(g.d_intermediate.data()[i], nt[i]), 1e-6);
  for (std::size_t i = 0; i < na.size(); ++i) EXPECT_LT(relative_error(da.taps()[i], na[i]), 1e-6);
}

// ----- full layer -----

struct Flattened {
  std::vector<double> values;
};

// Coordinates: x, W, then (alpha, beta) of every horizontal factor, then every vertical factor.
std::vector<double> flatten(const FieldTensor& x, const ArmaLayerParams& p) {
  std::vector<double> v(x.data().begin(), x.data().end());
  v.insert(v.end(), p.ma.values().begin(), p.ma.values().end());
  for (const auto& f : p.ar.horizontal_storage()) {
    v.push_back(f.alpha);
    v.push_back(f.beta);
  }
  for (const auto& f : p.ar.vertical_storage()) {
    v.push_back(f.alpha);
    v.push_back(f.beta);
  }
  return v;
}

std::pair<FieldTensor, ArmaLayerParams> unflatten(const std::vector<double>& v, const FieldTensor& x,
                                                  ArmaLayerParams p) {
  std::size_t i = 0;
  std::vector<double> xs(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(x.size()));
  i += x.size();
  for (double& w : p.ma.values()) w = v[i++];
  for (auto& f : p.ar.horizontal_storage()) {
    f.alpha = v[i++];
    f.beta = v[i++];
  }
  for (auto& f : p.ar.vertical_storage()) {
    f.alpha = v[i++];
    f.beta = v[i++];
  }
  return {FieldTensor(x.shape(), std::move(xs)), std::move(p)};
}

std::vector<double> flatten_gradients(const ArmaGradients& g) {
  std::vector<double> v(g.d_input.data().begin(), g.d_input.data().end());
  v.insert(v.end(), g.d_ma.values().begin(), g.d_ma.values().end());
  for (const auto& r : g.d_horizontal) {
    v.push_back(r.alpha);
    v.push_back(r.beta);
  }
  for (const auto& r : g.d_vertical) {
    v.push_back(r.alpha);
    v.push_back(r.beta);
  }
  return v;
}

TEST(ArmaLayer, IdentityFactorsReduceToMa) {
  std::mt19937_64 rng(13);
  const MaKernel w = random_ma(3, 2, 2, 1, rng);
  const FieldTensor x = random_field(6, 5, 2, rng);
  const ArmaLayerParams p{w, ReparamArKernel(2, 1)};
  EXPECT_LT(max_abs_diff(arma_forward(x, p).output, ma_forward(x, w)), 1e-13);
}

TEST(ArmaLayer, IdentityLayerGradients) {
  std::mt19937_64 rng(14);
  const FieldTensor x = random_field(6, 6, 1, rng);
  const ArmaLayerParams p{MaKernel::from_taps(Kernel2D(3, 3, {0, 0, 0, 0, 1, 0, 0, 0, 0})), ReparamArKernel(1, 1)};
  const ArForwardResult fwd = arma_forward(x, p);
  EXPECT_LT(max_abs_diff(fwd.output, x), 1e-14);
  const FieldTensor dy = random_field(6, 6, 1, rng);
  const ArmaGradients g = arma_backward(dy, x, p, fwd.cache);
  EXPECT_LT(max_abs_diff(g.d_input, dy), 1e-14);

  auto loss = [&](const std::vector<double>& v) {
    auto [xx, pp] = unflatten(v, x, p);
    const FieldTensor y = arma_forward(xx, pp).output;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += dy.data()[i] * y.data()[i];
    return s;
  };
  const auto numeric = central_differences(loss, flatten(x, p), 1e-5);
  const auto analytic = flatten_gradients(g);
  for (std::size_t i = 0; i < numeric.size(); ++i) EXPECT_LT(relative_error(analytic[i], numeric[i]), 1e-6) << i;
}

TEST(ArmaLayer, AllGradientsMatchFiniteDifferences) {
  for (unsigned seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    const std::size_t q = 1 + seed % 2, s = 1 + seed % 2, t = 1 + (seed / 2) % 2;
    const ArmaLayerParams p{random_ma(3, t, s, 1 + (seed / 4) % 2, rng), random_reparam(t, q, rng)};
    const FieldTensor x = random_field(6, 6, s, rng);
    const ArForwardResult fwd = arma_forward(x, p);
    const ArmaGradients g = arma_backward(fwd.output, x, p, fwd.cache);

    auto loss = [&](const std::vector<double>& v) {
      auto [xx, pp] = unflatten(v, x, p);
      return half_square_norm(arma_forward(xx, pp).output);
    };
    const auto numeric = central_differences(loss, flatten(x, p), 1e-5);
    const auto analytic = flatten_gradients(g);
    ASSERT_EQ(numeric.size(), analytic.size());
    for (std::size_t i = 0; i < numeric.size(); ++i)
      EXPECT_LT(relative_error(analytic[i], numeric[i]), 1e-5) << "seed " << seed << " coordinate " << i << " " << analytic[i] << " " << numeric[i];
  }
}

TEST(ArmaLayer, ShiftEquivariance) {
  std::mt19937_64 rng(15);
  const ArmaLayerParams p{random_ma(3, 2, 1, 1, rng), random_reparam(2, 2, rng)};
  const FieldTensor x = random_field(8, 9, 1, rng);
  const FieldTensor shifted_out = circular_shift(arma_forward(x, p).output, 3, -2);
  const FieldTensor out_of_shifted = arma_forward(circular_shift(x, 3, -2), p).output;
  EXPECT_LT(max_abs_diff(shifted_out, out_of_shifted), 1e-12);
}

TEST(ArmaLayer, Linearity) {
  std::mt19937_64 rng(16);
  const ArmaLayerParams p{random_ma(3, 2, 2, 1, rng), random_reparam(2, 1, rng)};
  const FieldTensor x1 = random_field(7, 7, 2, rng), x2 = random_field(7, 7, 2, rng);
  const double a = 1.7, b = -0.4;
  const FieldTensor lhs = arma_forward(a * x1 + b * x2, p).output;
  const FieldTensor rhs = a * arma_forward(x1, p).output + b * arma_forward(x2, p).output;
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-9);
}

TEST(ArmaLayer, ChannelMismatchIsUsageError) {
  std::mt19937_64 rng(17);
  EXPECT_THROW(arma_forward(random_field(6, 6, 1, rng), random_ma(3, 2, 1, 1, rng), SeparableArKernel(3, 1)),
               UsageError);
}

}  // namespace
}  // namespace armanet
