#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstddef>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "armanet/arma.hpp"
#include "armanet/convolution.hpp"
#include "armanet/error.hpp"
#include "armanet/filters.hpp"

namespace armanet {

/// One layer of a linear 1D ARMA network: K uniform MA taps spaced by d,
/// followed by the causal autoregressive factor y_i - a y_{i-1}.
struct LayerSpec1D {
  int taps = 3;  // K
  int dilation = 1;
  double ar_coefficient = 0.0;  // a

  void validate() const {
    require(taps >= 1 && taps % 2 == 1, "layer tap count K must be a positive odd integer");
    require(dilation >= 1, "layer dilation d must be positive");
    require(ar_coefficient >= 0.0 && ar_coefficient < 1.0, "autoregressive coefficient a must lie in [0, 1)");
  }
};

using LinearNetSpec = std::vector<LayerSpec1D>;

inline void validate(const LinearNetSpec& spec) {
  require(!spec.empty(), "network needs at least one layer");
  for (const auto& layer : spec) layer.validate();
}

/// d^2 (K^2 - 1) / 12 + a / (1 - a)^2: the squared-radius contribution of one layer.
inline double layer_variance(const LayerSpec1D& layer) {
  layer.validate();
  const double k = layer.taps, d = layer.dilation, a = layer.ar_coefficient;
  return d * d * (k * k - 1.0) / 12.0 + a / ((1.0 - a) * (1.0 - a));
}

inline double analytic_radius_arma(const LinearNetSpec& spec) {
  validate(spec);
  double total = 0.0;
  for (const auto& layer : spec) total += layer_variance(layer);
  return std::sqrt(total);
}

struct LayerMoments {
  double first = 0.0;
  double second = 0.0;

  double variance() const noexcept { return second - first * first; }
};

/// Raw moments of one layer's effective filter (normalized geometric AR
/// inverse convolved with the uniform dilated MA taps). The geometric factor
/// contributes a/(1-a) and a(1+a)/(1-a)^2; the MA factor uses Faulhaber's
/// sums of p and p^2.
inline LayerMoments layer_moments(const LayerSpec1D& layer) {
  layer.validate();
  const double k = layer.taps, d = layer.dilation, a = layer.ar_coefficient;
  const double geo1 = a / (1.0 - a);
  const double geo2 = a * (1.0 + a) / ((1.0 - a) * (1.0 - a));
  const double ma1 = d * (k - 1.0) / 2.0;
  const double ma2 = d * d * (k - 1.0) * (2.0 * k - 1.0) / 6.0;
  return {geo1 + ma1, geo2 + 2.0 * geo1 * ma1 + ma2};
}

inline constexpr double kDefaultTruncation = 1e-12;

/// Horizon H of the truncated geometric inverse: a^H <= epsilon.
inline std::size_t geometric_horizon(double a, double epsilon) {
  if (a == 0.0) return 1;
  return static_cast<std::size_t>(std::max(1.0, std::ceil(std::log(epsilon) / std::log(a))));
}

/// Taps of inv(1, -a) * w at offsets 0, 1, ...: a^p for p < H, convolved with
/// (1 - a) / K at offsets {0, d, ..., d (K - 1)}. Sums to 1 - a^H.
inline TapSequence effective_filter_1d(const LayerSpec1D& layer, double epsilon = kDefaultTruncation) {
  layer.validate();
  require(epsilon > 0.0 && epsilon < 1.0, "truncation epsilon must lie in (0, 1)");
  const double a = layer.ar_coefficient;
  TapSequence geometric{0, std::vector<double>(geometric_horizon(a, epsilon))};
  double power = 1.0;
  for (double& v : geometric.values) {
    v = power;
    power *= a;
  }
  TapSequence ma{0, std::vector<double>(static_cast<std::size_t>(layer.dilation * (layer.taps - 1) + 1), 0.0)};
  for (int p = 0; p < layer.taps; ++p)
    ma.values[static_cast<std::size_t>(p * layer.dilation)] = (1.0 - a) / static_cast<double>(layer.taps);
  return convolve(geometric, ma);
}

/// Normalized distribution of gradient magnitudes on a rectangular patch of
/// offsets: entry (r, c) sits at offset (row_origin + r, col_origin + c).
/// A 1D map has a single row at offset 0.
struct ErfMap {
  std::size_t rows = 1;
  std::size_t cols = 0;
  long long row_origin = 0;
  long long col_origin = 0;
  std::vector<double> weights;

  double at(std::size_t r, std::size_t c) const noexcept { return weights[r * cols + c]; }
  long long row_offset(std::size_t r) const noexcept { return row_origin + static_cast<long long>(r); }
  long long col_offset(std::size_t c) const noexcept { return col_origin + static_cast<long long>(c); }

  double total() const noexcept {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }
};

namespace detail {

inline void normalize(ErfMap& map) {
  double s = 0.0;
  for (double& w : map.weights) {
    w = std::abs(w);
    s += w;
  }
  require(s > 0.0, "gradient map is identically zero");
  for (double& w : map.weights) w /= s;
}

}  // namespace detail

/// Composes every layer's effective filter, reverses the result (gradient of
/// an output with respect to inputs at negative offsets), and normalizes.
inline ErfMap empirical_erf_1d(const LinearNetSpec& spec, double epsilon = kDefaultTruncation) {
  validate(spec);
  TapSequence composed{0, {1.0}};
  for (const auto& layer : spec) composed = convolve(composed, effective_filter_1d(layer, epsilon));
  const TapSequence rev = reversed(composed);
  ErfMap map{1, rev.values.size(), 0, rev.first_offset, rev.values};
  detail::normalize(map);
  return map;
}

struct AxisVariance {
  double rows = 0.0;  // variance of the vertical offset p1
  double cols = 0.0;  // variance of the horizontal offset p2
};

inline AxisVariance erf_axis_variance(const ErfMap& map) {
  double mr = 0.0, mc = 0.0, sr = 0.0, sc = 0.0;
  for (std::size_t r = 0; r < map.rows; ++r)
    for (std::size_t c = 0; c < map.cols; ++c) {
      const double w = map.at(r, c);
      const auto pr = static_cast<double>(map.row_offset(r)), pc = static_cast<double>(map.col_offset(c));
      mr += w * pr;
      mc += w * pc;
    }
  for (std::size_t r = 0; r < map.rows; ++r)
    for (std::size_t c = 0; c < map.cols; ++c) {
      const double w = map.at(r, c);
      const double dr = static_cast<double>(map.row_offset(r)) - mr;
      const double dc = static_cast<double>(map.col_offset(c)) - mc;
      sr += w * dr * dr;
      sc += w * dc * dc;
    }
  return {sr, sc};
}

/// sqrt( sum (p1^2 + p2^2) ERF - (sum sqrt(p1^2 + p2^2) ERF)^2 ): the standard
/// deviation of the distance from the output location.
inline double erf_radius(const ErfMap& map) {
  double second = 0.0, first = 0.0;
  for (std::size_t r = 0; r < map.rows; ++r)
    for (std::size_t c = 0; c < map.cols; ++c) {
      const double w = map.at(r, c);
      const auto pr = static_cast<double>(map.row_offset(r)), pc = static_cast<double>(map.col_offset(c));
      const double sq = pr * pr + pc * pc;
      second += w * sq;
      first += w * std::sqrt(sq);
    }
  return std::sqrt(std::max(0.0, second - first * first));
}

/// sqrt of the summed per-axis variances; the quantity the analytic formula predicts in 2D.
inline double erf_axis_radius(const ErfMap& map) {
  const AxisVariance v = erf_axis_variance(map);
  return std::sqrt(v.rows + v.cols);
}

/// Excess kurtosis of the horizontal marginal.
inline double erf_excess_kurtosis(const ErfMap& map) {
  std::vector<double> marginal(map.cols, 0.0);
  for (std::size_t r = 0; r < map.rows; ++r)
    for (std::size_t c = 0; c < map.cols; ++c) marginal[c] += map.at(r, c);
  double mean = 0.0;
  for (std::size_t c = 0; c < map.cols; ++c) mean += marginal[c] * static_cast<double>(map.col_offset(c));
  double m2 = 0.0, m4 = 0.0;
  for (std::size_t c = 0; c < map.cols; ++c) {
    const double dev = static_cast<double>(map.col_offset(c)) - mean;
    m2 += marginal[c] * dev * dev;
    m4 += marginal[c] * dev * dev * dev * dev;
  }
  return m4 / (m2 * m2) - 3.0;
}

enum class KernelInit {
  Uniform,  // every MA tap (1 - a)^2 / (K^2 C); the separable idealization
  Xavier,   // uniform in +-sqrt(6 / ((S + T) K^2)), seeded
};

struct Erf2dOptions {
  std::size_t grid = 64;
  std::size_t channels = 1;
  std::uint64_t seed = 0;
  KernelInit init = KernelInit::Uniform;
  double wraparound_tolerance = 1e-6;
};

/// Fraction of the 2D gradient-map mass that a circular grid of side `grid`
/// folds onto itself, estimated from the 1D composition along one axis.
inline double wraparound_mass(const LinearNetSpec& spec, std::size_t grid) {
  const ErfMap line = empirical_erf_1d(spec, 1e-14);
  if (line.cols <= grid) return 0.0;
  double window = 0.0;
  for (std::size_t c = 0; c < grid; ++c) window += line.weights[c];
  double best = window;
  for (std::size_t c = grid; c < line.cols; ++c) {
    window += line.weights[c] - line.weights[c - grid];
    best = std::max(best, window);
  }
  const double inside = std::min(1.0, best);
  return 1.0 - inside * inside;
}

namespace detail {

// Offset of the first index of an unwrapped axis, centered on the circular mean.
inline long long unwrap_origin(const std::vector<double>& marginal, long long center) {
  const auto n = static_cast<double>(marginal.size());
  std::complex<double> phasor{};
  for (std::size_t i = 0; i < marginal.size(); ++i)
    phasor += marginal[i] * std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(i) / n);
  double angle = std::arg(phasor);
  if (angle < 0.0) angle += 2.0 * std::numbers::pi;
  const auto mean_index = static_cast<long long>(std::llround(angle / (2.0 * std::numbers::pi) * n));
  return mean_index - static_cast<long long>(marginal.size() / 2) - center;
}

}  // namespace detail

/// Gradient map of a stacked 2D ARMA network, every layer C -> C channels.
///
/// A unit gradient is placed at the center output pixel of every channel and
/// propagated back through arma_backward; |dX| is averaged over channels and
/// normalized. For circular linear networks the map does not depend on the
/// output location, so one backward pass is exact.
inline ErfMap empirical_erf_2d(const LinearNetSpec& spec, const Erf2dOptions& options) {
  validate(spec);
  require(options.grid >= 1, "grid must be positive");
  require(options.channels >= 1, "channel count must be positive");
  const double folded = wraparound_mass(spec, options.grid);
  if (!(folded < options.wraparound_tolerance))
    throw WraparoundError("gradient-map mass " + std::to_string(folded) + " wraps around a " +
                          std::to_string(options.grid) + "x" + std::to_string(options.grid) +
                          " grid; use a larger grid");

  const std::size_t n = options.grid, nc = options.channels;
  std::mt19937_64 rng(options.seed);
  struct Layer {
    MaKernel ma;
    SeparableArKernel ar;
  };
  std::vector<Layer> layers;
  for (const auto& spec_layer : spec) {
    const auto k = static_cast<std::size_t>(spec_layer.taps);
    const double a = spec_layer.ar_coefficient;
    MaKernel ma(k, k, nc, nc, static_cast<std::size_t>(spec_layer.dilation));
    if (options.init == KernelInit::Uniform) {
      const double tap = (1.0 - a) * (1.0 - a) / static_cast<double>(k * k * nc);
      for (double& v : ma.values()) v = tap;
    } else {
      xavier_uniform(ma, rng);
    }
    SeparableArKernel ar(nc, 1);
    for (std::size_t t = 0; t < nc; ++t) ar.horizontal(t, 0) = ar.vertical(t, 0) = {0.0, 1.0, -a};
    layers.push_back({std::move(ma), std::move(ar)});
  }

  std::vector<FieldTensor> inputs;
  std::vector<LayerCache> caches;
  FieldTensor x(n, n, nc);
  for (const auto& layer : layers) {
    inputs.push_back(x);
    ArForwardResult fwd = arma_forward(x, layer.ma, layer.ar);
    x = std::move(fwd.output);
    caches.push_back(std::move(fwd.cache));
  }

  const std::size_t center = n / 2;
  FieldTensor grad(n, n, nc);
  for (std::size_t c = 0; c < nc; ++c) grad(center, center, c) = 1.0 / static_cast<double>(nc);
  for (std::size_t l = layers.size(); l-- > 0;) {
    const ArBackwardResult ar_grad = ar_backward(grad, caches[l]);
    grad = ma_backward(ar_grad.d_intermediate, inputs[l], layers[l].ma).d_input;
  }

  std::vector<double> plane(n * n, 0.0), row_marginal(n, 0.0), col_marginal(n, 0.0);
  for (std::size_t i1 = 0; i1 < n; ++i1)
    for (std::size_t i2 = 0; i2 < n; ++i2) {
      double s = 0.0;
      for (std::size_t c = 0; c < nc; ++c) s += std::abs(grad(i1, i2, c));
      plane[i1 * n + i2] = s / static_cast<double>(nc);
      row_marginal[i1] += plane[i1 * n + i2];
      col_marginal[i2] += plane[i1 * n + i2];
    }

  const auto c0 = static_cast<long long>(center);
  ErfMap map{n, n, detail::unwrap_origin(row_marginal, c0), detail::unwrap_origin(col_marginal, c0),
             std::vector<double>(n * n)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t i1 = wrap_index(map.row_offset(r) + c0, n);
      const std::size_t i2 = wrap_index(map.col_offset(c) + c0, n);
      map.weights[r * n + c] = plane[i1 * n + i2];
    }
  detail::normalize(map);
  return map;
}

}  // namespace armanet
