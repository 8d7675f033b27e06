#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "armanet/convolution.hpp"
#include "armanet/error.hpp"
#include "armanet/fft.hpp"
#include "armanet/filters.hpp"
#include "armanet/tensor.hpp"

namespace armanet {

// ---------------------------------------------------------------------------
// Moving-average stage
// ---------------------------------------------------------------------------

/// T(:, :, t) = sum_s W(:, :, t, s) * X(:, :, s), circular, taps spaced by the dilation.
inline FieldTensor ma_forward(const FieldTensor& x, const MaKernel& w) {
  require(x.channels() == w.in_channels(), "MA input has " + std::to_string(x.channels()) +
                                               " channels, kernel expects " +
                                               std::to_string(w.in_channels()));
  const std::size_t h = x.height(), wd = x.width(), nt = w.out_channels(), ns = w.in_channels();
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t s = 0; s < ns; ++s) check_footprint(w.slice(t, s), h, wd, w.dilation());

  const auto d = static_cast<long long>(w.dilation());
  FieldTensor out(h, wd, nt);
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t s = 0; s < ns; ++s)
      for (int p1 = -w.half_height(); p1 <= w.half_height(); ++p1)
        for (int p2 = -w.half_width(); p2 <= w.half_width(); ++p2) {
          const double tap = w.at(t, s, p1, p2);
          if (tap == 0.0) continue;
          const std::size_t s1 = wrap_index(d * p1, h), s2 = wrap_index(d * p2, wd);
          for (std::size_t i1 = 0; i1 < h; ++i1) {
            const std::size_t j1 = (i1 + h - s1) % h;
            for (std::size_t i2 = 0; i2 < wd; ++i2) out(i1, i2, t) += tap * x(j1, (i2 + wd - s2) % wd, s);
          }
        }
  return out;
}

struct MaGradients {
  FieldTensor d_input;
  MaKernel d_kernel;
};

/// Adjoint of ma_forward: dX_s = sum_t W_ts^dagger * dT_t and
/// dW(p, t, s) = sum_i dT_t(i) X_s(i - d p).
inline MaGradients ma_backward(const FieldTensor& d_out, const FieldTensor& x, const MaKernel& w) {
  require(x.channels() == w.in_channels(), "MA input channel mismatch");
  require(d_out.channels() == w.out_channels(), "MA output-gradient channel mismatch");
  require(d_out.height() == x.height() && d_out.width() == x.width(), "MA gradient shape mismatch");
  const std::size_t h = x.height(), wd = x.width(), nt = w.out_channels(), ns = w.in_channels();
  const auto d = static_cast<long long>(w.dilation());

  MaGradients g{FieldTensor(x.shape()), w.zeros_like()};
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t s = 0; s < ns; ++s)
      for (int p1 = -w.half_height(); p1 <= w.half_height(); ++p1)
        for (int p2 = -w.half_width(); p2 <= w.half_width(); ++p2) {
          const double tap = w.at(t, s, p1, p2);
          const std::size_t s1 = wrap_index(d * p1, h), s2 = wrap_index(d * p2, wd);
          double dw = 0.0;
          for (std::size_t i1 = 0; i1 < h; ++i1) {
            const std::size_t j1 = (i1 + h - s1) % h;
            for (std::size_t i2 = 0; i2 < wd; ++i2) {
              const std::size_t j2 = (i2 + wd - s2) % wd;
              const double grad = d_out(i1, i2, t);
              dw += grad * x(j1, j2, s);
              g.d_input(j1, j2, s) += tap * grad;
            }
          }
          g.d_kernel.at(t, s, p1, p2) = dw;
        }
  return g;
}

// ---------------------------------------------------------------------------
// Autoregressive stage
// ---------------------------------------------------------------------------

/// Quantities from the forward AR solve reused by its backward pass.
struct LayerCache {
  Dft2Plan plan;
  SpectralTensor kernel_spectrum;  // A hat, one channel per output channel
  SpectralTensor output_spectrum;  // Y hat
  FieldTensor intermediate;        // T
};

struct ArForwardResult {
  FieldTensor output;
  LayerCache cache;
};

/// Embeds one 2D kernel per channel on the full grid.
inline FieldTensor embed_kernels(std::span<const Kernel2D> kernels, std::size_t height, std::size_t width) {
  FieldTensor out(height, width, kernels.size());
  for (std::size_t t = 0; t < kernels.size(); ++t) {
    const Kernel2D& k = kernels[t];
    check_footprint(k, height, width, 1);
    for (int p1 = -k.half_height(); p1 <= k.half_height(); ++p1)
      for (int p2 = -k.half_width(); p2 <= k.half_width(); ++p2)
        out(wrap_index(p1, height), wrap_index(p2, width), t) += k.at(p1, p2);
  }
  return out;
}

inline std::vector<Kernel2D> materialize_all(const SeparableArKernel& ar) {
  std::vector<Kernel2D> kernels;
  kernels.reserve(ar.channels());
  for (std::size_t t = 0; t < ar.channels(); ++t) kernels.push_back(materialize_2d(ar, t));
  return kernels;
}

/// Solves A_t * Y_t = T_t per channel by frequency-domain division.
/// Accepts arbitrary (not necessarily separable or stable) kernels; the
/// spectrum guard is then the only safety check.
inline ArForwardResult ar_forward(const FieldTensor& t, std::span<const Kernel2D> kernels,
                                  double epsilon = kDefaultSpectrumEpsilon) {
  require(kernels.size() == t.channels(), "AR kernel count does not match channel count");
  Dft2Plan plan(t.height(), t.width());
  SpectralTensor a_hat = plan.forward(embed_kernels(kernels, t.height(), t.width()));
  SpectralTensor y_hat = spectral_divide(plan.forward(t), a_hat, epsilon);
  FieldTensor y = plan.inverse_real(y_hat);
  return {std::move(y), LayerCache{std::move(plan), std::move(a_hat), std::move(y_hat), t}};
}

/// DFT of a 1D tap sequence on a length-n circle, by direct summation.
inline std::vector<Complex> tap_spectrum(const TapSequence& s, std::size_t n) {
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < s.values.size(); ++j) {
      const std::size_t phase = (wrap_index(s.first_offset + static_cast<long long>(j), n) * k) % n;
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(phase) / static_cast<double>(n);
      out[k] += s.values[j] * Complex{std::cos(angle), std::sin(angle)};
    }
  return out;
}

/// Per-channel 1D spectra of a separable AR kernel; the 2D spectrum is
/// vertical[k1] * horizontal[k2].
struct SeparableSpectrum {
  std::vector<std::vector<Complex>> vertical;
  std::vector<std::vector<Complex>> horizontal;
};

inline SeparableSpectrum separable_spectrum(const SeparableArKernel& ar, std::size_t height, std::size_t width) {
  SeparableSpectrum out;
  for (std::size_t c = 0; c < ar.channels(); ++c) {
    check_footprint(materialize_2d(ar, c), height, width, 1);
    out.vertical.push_back(tap_spectrum(compose_1d(ar.vertical_factors(c)), height));
    out.horizontal.push_back(tap_spectrum(compose_1d(ar.horizontal_factors(c)), width));
  }
  return out;
}

inline ArForwardResult ar_forward(const FieldTensor& t, const SeparableArKernel& ar,
                                  double epsilon = kDefaultSpectrumEpsilon) {
  require(ar.channels() == t.channels(), "AR kernel channel count does not match input");
  const std::size_t h = t.height(), w = t.width(), nc = t.channels();
  const SeparableSpectrum spectra = separable_spectrum(ar, h, w);
  SpectralTensor a_hat(t.shape());
  for (std::size_t k1 = 0; k1 < h; ++k1)
    for (std::size_t k2 = 0; k2 < w; ++k2)
      for (std::size_t c = 0; c < nc; ++c) a_hat(k1, k2, c) = spectra.vertical[c][k1] * spectra.horizontal[c][k2];
  Dft2Plan plan(h, w);
  SpectralTensor y_hat = spectral_divide(plan.forward(t), a_hat, epsilon);
  FieldTensor y = plan.inverse_real(y_hat);
  return {std::move(y), LayerCache{std::move(plan), std::move(a_hat), std::move(y_hat), t}};
}

/// Forward-only AR solve: same result as ar_forward(t, ar).output without
/// keeping the spectra for a backward pass.
inline FieldTensor ar_solve(const FieldTensor& t, const SeparableArKernel& ar,
                            double epsilon = kDefaultSpectrumEpsilon) {
  require(ar.channels() == t.channels(), "AR kernel channel count does not match input");
  const std::size_t h = t.height(), w = t.width(), nc = t.channels();
  const SeparableSpectrum spectra = separable_spectrum(ar, h, w);
  const Dft2Plan plan(h, w);
  SpectralTensor work = plan.forward(t);
  for (std::size_t k1 = 0; k1 < h; ++k1)
    for (std::size_t k2 = 0; k2 < w; ++k2)
      for (std::size_t c = 0; c < nc; ++c) {
        const Complex q = spectra.vertical[c][k1] * spectra.horizontal[c][k2];
        const double mag = std::abs(q);
        if (!(mag >= epsilon)) throw SingularSpectrumError(k1, k2, c, mag);
        work(k1, k2, c) /= q;
      }
  work = plan.inverse(std::move(work));
  FieldTensor y(t.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = work.data()[i].real();
  return y;
}

inline constexpr std::size_t kDenseSolveLimit = 4096;

namespace detail {

// In-place LU with partial pivoting; solves matrix * x = rhs. `matrix` is n x n row-major.
inline std::vector<double> lu_solve(std::vector<double> matrix, std::vector<double> rhs, std::size_t n) {
  double scale = 0.0;
  for (double v : matrix) scale = std::max(scale, std::abs(v));
  const double tiny = scale * 1e-13 * static_cast<double>(n);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    double best = std::abs(matrix[col * n + col]);
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(matrix[r * n + col]) > best) {
        best = std::abs(matrix[r * n + col]);
        pivot = r;
      }
    if (!(best > tiny))
      throw SingularSpectrumError("dense AR system is singular (pivot " + std::to_string(best) +
                                  " at column " + std::to_string(col) + ")");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(matrix[col * n + c], matrix[pivot * n + c]);
      std::swap(rhs[col], rhs[pivot]);
    }
    const double diag = matrix[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = matrix[r * n + col] / diag;
      if (factor == 0.0) continue;
      matrix[r * n + col] = factor;
      for (std::size_t c = col + 1; c < n; ++c) matrix[r * n + c] -= factor * matrix[col * n + c];
      rhs[r] -= factor * rhs[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = rhs[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= matrix[i * n + c] * x[c];
    x[i] = acc / matrix[i * n + i];
  }
  return x;
}

}  // namespace detail

/// Reference AR solve: assembles the (I1 I2) x (I1 I2) circulant-block system
/// of each channel and solves it by Gaussian elimination. O((I1 I2)^3).
inline FieldTensor ar_forward_dense(const FieldTensor& t, std::span<const Kernel2D> kernels) {
  require(kernels.size() == t.channels(), "AR kernel count does not match channel count");
  const std::size_t h = t.height(), w = t.width(), n = h * w;
  require(n <= kDenseSolveLimit, "dense AR solve limited to I1*I2 <= " + std::to_string(kDenseSolveLimit));
  FieldTensor y(t.shape());
  for (std::size_t c = 0; c < t.channels(); ++c) {
    const FieldTensor e = embed_kernel(kernels[c], h, w);
    std::vector<double> matrix(n * n, 0.0), rhs(n);
    for (std::size_t i1 = 0; i1 < h; ++i1)
      for (std::size_t i2 = 0; i2 < w; ++i2) {
        const std::size_t row = i1 * w + i2;
        rhs[row] = t(i1, i2, c);
        for (std::size_t j1 = 0; j1 < h; ++j1)
          for (std::size_t j2 = 0; j2 < w; ++j2)
            matrix[row * n + j1 * w + j2] = e((i1 + h - j1) % h, (i2 + w - j2) % w);
      }
    const std::vector<double> sol = detail::lu_solve(std::move(matrix), std::move(rhs), n);
    for (std::size_t i = 0; i < n; ++i) y(i / w, i % w, c) = sol[i];
  }
  return y;
}

inline FieldTensor ar_forward_dense(const FieldTensor& t, const SeparableArKernel& ar) {
  const std::vector<Kernel2D> kernels = materialize_all(ar);
  return ar_forward_dense(t, kernels);
}

struct ArBackwardResult {
  FieldTensor d_intermediate;  // dT
  FieldTensor d_kernel_field;  // dL/d(embedded A), full grid, one channel per output channel
};

/// Backward pass of the AR solve. With A^dagger the coordinate-reversed kernel,
/// A^dagger * dT = dY and A^dagger * dA = -Y^dagger * dY; both are solved in the
/// frequency domain where reversal of a real kernel becomes conjugation.
inline ArBackwardResult ar_backward(const FieldTensor& d_out, const LayerCache& cache) {
  require(d_out.shape() == cache.intermediate.shape(), "AR gradient shape does not match the cached forward");
  SpectralTensor dy_hat = cache.plan.forward(d_out);
  SpectralTensor conj_a(cache.kernel_spectrum.shape());
  for (std::size_t i = 0; i < conj_a.size(); ++i) conj_a.data()[i] = std::conj(cache.kernel_spectrum.data()[i]);
  SpectralTensor dt_hat = spectral_divide(dy_hat, conj_a, 0.0);
  SpectralTensor da_hat(dt_hat.shape());
  for (std::size_t i = 0; i < da_hat.size(); ++i)
    da_hat.data()[i] = -std::conj(cache.output_spectrum.data()[i]) * dt_hat.data()[i];
  return {cache.plan.inverse_real(dt_hat), cache.plan.inverse_real(da_hat)};
}

/// Reads the kernel-field gradient back at the embedded tap positions of a
/// (2 half_h + 1) x (2 half_w + 1) kernel. Aliased taps each receive the full
/// gradient of their shared grid cell.
inline Kernel2D restrict_to_taps(const FieldTensor& d_field, std::size_t channel, int half_h, int half_w) {
  Kernel2D k(static_cast<std::size_t>(2 * half_h + 1), static_cast<std::size_t>(2 * half_w + 1));
  for (int p1 = -half_h; p1 <= half_h; ++p1)
    for (int p2 = -half_w; p2 <= half_w; ++p2)
      k.at(p1, p2) = d_field(wrap_index(p1, d_field.height()), wrap_index(p2, d_field.width()), channel);
  return k;
}

/// Gradient w.r.t. each length-3 factor, laid out like SeparableArKernel storage.
struct FactorGradients {
  std::vector<std::array<double, 3>> horizontal;
  std::vector<std::array<double, 3>> vertical;
};

/// Chains tap gradients dA(p1, p2) of every channel through the outer
/// product and the cascade convolutions down to the individual factors.
inline FactorGradients factor_gradients(const SeparableArKernel& ar, std::span<const Kernel2D> d_taps) {
  require(d_taps.size() == ar.channels(), "tap-gradient count does not match channels");
  const std::size_t nq = ar.depth();
  const int q = static_cast<int>(nq);
  FactorGradients out{std::vector<std::array<double, 3>>(ar.channels() * nq),
                      std::vector<std::array<double, 3>>(ar.channels() * nq)};
  for (std::size_t t = 0; t < ar.channels(); ++t) {
    const Kernel2D& da = d_taps[t];
    require(da.half_height() == q && da.half_width() == q, "tap-gradient size does not match cascade depth");
    const TapSequence horiz = compose_1d(ar.horizontal_factors(t));
    const TapSequence vert = compose_1d(ar.vertical_factors(t));
    TapSequence d_horiz{-q, std::vector<double>(2 * nq + 1, 0.0)};
    TapSequence d_vert{-q, std::vector<double>(2 * nq + 1, 0.0)};
    for (int p1 = -q; p1 <= q; ++p1)
      for (int p2 = -q; p2 <= q; ++p2) {
        d_horiz.values[static_cast<std::size_t>(p2 + q)] += da.at(p1, p2) * vert.at(p1);
        d_vert.values[static_cast<std::size_t>(p1 + q)] += da.at(p1, p2) * horiz.at(p2);
      }
    const auto gh = compose_1d_backward(ar.horizontal_factors(t), d_horiz);
    const auto gv = compose_1d_backward(ar.vertical_factors(t), d_vert);
    for (std::size_t k = 0; k < nq; ++k) {
      out.horizontal[t * nq + k] = gh[k];
      out.vertical[t * nq + k] = gv[k];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full layer
// ---------------------------------------------------------------------------

/// Forward of the raw-parameterized layer: Y = AR^{-1}(MA(X)).
inline ArForwardResult arma_forward(const FieldTensor& x, const MaKernel& ma, const SeparableArKernel& ar) {
  require(ma.out_channels() == ar.channels(), "MA output channels must equal AR channels");
  return ar_forward(ma_forward(x, ma), ar);
}

struct ArmaGradients {
  FieldTensor d_input;
  MaKernel d_ma;
  std::vector<Kernel2D> d_ar_taps;  // per output channel, (2Q+1) x (2Q+1)
  FactorGradients d_factors;
  std::vector<ReparamGradient> d_horizontal;  // filled by the reparameterized overload
  std::vector<ReparamGradient> d_vertical;
};

inline ArmaGradients arma_backward(const FieldTensor& d_out, const FieldTensor& x, const MaKernel& ma,
                                   const SeparableArKernel& ar, const LayerCache& cache) {
  ArBackwardResult ar_grad = ar_backward(d_out, cache);
  MaGradients ma_grad = ma_backward(ar_grad.d_intermediate, x, ma);
  const int q = static_cast<int>(ar.depth());
  std::vector<Kernel2D> d_taps;
  d_taps.reserve(ar.channels());
  for (std::size_t t = 0; t < ar.channels(); ++t) d_taps.push_back(restrict_to_taps(ar_grad.d_kernel_field, t, q, q));
  FactorGradients d_factors = factor_gradients(ar, d_taps);
  return {std::move(ma_grad.d_input), std::move(ma_grad.d_kernel), std::move(d_taps), std::move(d_factors), {}, {}};
}

/// Xavier's normalized initializer: uniform in +-sqrt(6 / (fan_in + fan_out)),
/// fans counted as channels times taps.
inline void xavier_uniform(MaKernel& w, std::mt19937_64& rng) {
  const double taps = static_cast<double>(w.tap_height() * w.tap_width());
  const double fans = taps * static_cast<double>(w.in_channels() + w.out_channels());
  std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / fans), std::sqrt(6.0 / fans));
  for (double& v : w.values()) v = dist(rng);
}

/// Learnable layer: MA kernel plus reparameterized separable AR cascades.
/// Every materialized factor is stable by construction.
struct ArmaLayerParams {
  MaKernel ma;
  ReparamArKernel ar;

  std::size_t in_channels() const noexcept { return ma.in_channels(); }
  std::size_t out_channels() const noexcept { return ma.out_channels(); }
};

inline ArForwardResult arma_forward(const FieldTensor& x, const ArmaLayerParams& params) {
  return arma_forward(x, params.ma, params.ar.materialize());
}

inline ArmaGradients arma_backward(const FieldTensor& d_out, const FieldTensor& x, const ArmaLayerParams& params,
                                   const LayerCache& cache) {
  ArmaGradients g = arma_backward(d_out, x, params.ma, params.ar.materialize(), cache);
  const auto& hs = params.ar.horizontal_storage();
  const auto& vs = params.ar.vertical_storage();
  g.d_horizontal.resize(hs.size());
  g.d_vertical.resize(vs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    g.d_horizontal[i] = reparam_gradient(hs[i], g.d_factors.horizontal[i][0], g.d_factors.horizontal[i][2]);
    g.d_vertical[i] = reparam_gradient(vs[i], g.d_factors.vertical[i][0], g.d_factors.vertical[i][2]);
  }
  return g;
}

}  // namespace armanet
