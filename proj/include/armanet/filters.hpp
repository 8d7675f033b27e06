#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "armanet/convolution.hpp"
#include "armanet/error.hpp"

namespace armanet {

/// Three-tap autoregressive factor with taps at offsets -1, 0, +1.
struct Length3Filter {
  double fm1 = 0.0;
  double f0 = 1.0;
  double fp1 = 0.0;

  static constexpr Length3Filter identity() noexcept { return {0.0, 1.0, 0.0}; }

  TapSequence taps() const { return {-1, {fm1, f0, fp1}}; }
  friend bool operator==(const Length3Filter&, const Length3Filter&) = default;
};

/// Unconstrained parameters of one factor. The materialized taps satisfy
/// fm1 + fp1 = f0 tanh(beta), so every (alpha, beta) lands in the stable strip.
struct ReparamFilter {
  double alpha = 0.0;
  double beta = 0.0;
  double f0 = 1.0;
};

inline Length3Filter materialize(const ReparamFilter& p) noexcept {
  const double t = std::tanh(p.beta);
  return {0.5 * p.f0 * (t - p.alpha), p.f0, 0.5 * p.f0 * (t + p.alpha)};
}

// Inverse of materialize for filters inside the stable strip.
inline ReparamFilter reparameterize(const Length3Filter& f) {
  require(f.f0 > 0.0, "filter center tap must be positive");
  const double sum = (f.fm1 + f.fp1) / f.f0;
  require(std::abs(sum) < 1.0, "filter lies outside the stable strip");
  return {(f.fp1 - f.fm1) / f.f0, std::atanh(sum), f.f0};
}

/// |fm1 + fp1| < f0, strict.
inline bool is_stable(const Length3Filter& f) {
  require(f.f0 > 0.0, "filter center tap must be positive");
  return std::abs(f.fm1 + f.fp1) < f.f0;
}

/// Roots of fm1 z^2 + f0 z + fp1, ordered by modulus.
struct FilterZeros {
  std::size_t count = 0;  // 2 for a true quadratic, 1 when fm1 == 0, 0 for a pure gain
  Complex z1{};
  Complex z2{};

  // |z1| < 1 < |z2|; a missing root sits at infinity.
  bool straddles_unit_circle() const noexcept {
    switch (count) {
      case 0: return true;
      case 1: return std::abs(z1) < 1.0;
      default: return std::abs(z1) < 1.0 && std::abs(z2) > 1.0;
    }
  }
};

inline FilterZeros zeros_of(const Length3Filter& f) {
  FilterZeros z;
  if (f.fm1 == 0.0) {
    if (f.fp1 != 0.0) {
      z.count = 1;
      z.z1 = -f.fp1 / f.f0;
    }
    return z;
  }
  z.count = 2;
  const double a = f.fm1, b = f.f0, c = f.fp1;
  const Complex root = std::sqrt(Complex(b * b - 4.0 * a * c, 0.0));
  // Avoids cancellation: pick the sign that adds magnitudes.
  const Complex q = -0.5 * (b >= 0.0 ? Complex(b) + root : Complex(b) - root);
  Complex r1, r2;
  if (std::abs(q) == 0.0) {
    r1 = r2 = Complex(0.0);
  } else {
    r1 = q / a;
    r2 = c / q;
  }
  if (std::abs(r2) < std::abs(r1)) std::swap(r1, r2);
  z.z1 = r1;
  z.z2 = r2;
  return z;
}

/// Convolution of all factors; offsets -Q..Q.
inline TapSequence compose_1d(std::span<const Length3Filter> filters) {
  require(!filters.empty(), "compose_1d needs at least one factor");
  TapSequence out = filters[0].taps();
  for (std::size_t q = 1; q < filters.size(); ++q) out = convolve(out, filters[q].taps());
  return out;
}

/// Minimum over the unit circle of |fm1 e^{iw} + f0 + fp1 e^{-iw}| is at least
/// f0 - |fm1 + fp1| for a stable factor.
inline double spectrum_lower_bound(const Length3Filter& f) { return f.f0 - std::abs(f.fm1 + f.fp1); }

/// dAlpha, dBeta from gradients w.r.t. (fm1, fp1).
struct ReparamGradient {
  double alpha = 0.0;
  double beta = 0.0;
};

inline ReparamGradient reparam_gradient(const ReparamFilter& p, double d_fm1, double d_fp1) noexcept {
  const double t = std::tanh(p.beta);
  return {0.5 * p.f0 * (d_fp1 - d_fm1), 0.5 * p.f0 * (1.0 - t * t) * (d_fm1 + d_fp1)};
}

/// Gradient of a scalar loss w.r.t. each factor's taps given the gradient
/// w.r.t. their composition (offsets -Q..Q).
inline std::vector<std::array<double, 3>> compose_1d_backward(std::span<const Length3Filter> filters,
                                                              const TapSequence& d_composed) {
  std::vector<std::array<double, 3>> grads(filters.size());
  for (std::size_t q = 0; q < filters.size(); ++q) {
    TapSequence rest{0, {1.0}};
    for (std::size_t r = 0; r < filters.size(); ++r)
      if (r != q) rest = convolve(rest, filters[r].taps());
    for (int m = -1; m <= 1; ++m) {
      double acc = 0.0;
      for (int n = d_composed.first_offset; n <= d_composed.last_offset(); ++n)
        acc += d_composed.at(n) * rest.at(n - m);
      grads[q][static_cast<std::size_t>(m + 1)] = acc;
    }
  }
  return grads;
}

/// Per-channel cascades of length-3 factors for both axes.
///
/// `horizontal` factors (f) act along the width axis, `vertical` factors (g)
/// along the height axis: the 2D kernel of channel t is
/// A(p1, p2) = G_t(p1) * F_t(p2), with F_t and G_t the composed cascades.
class SeparableArKernel {
 public:
  SeparableArKernel(std::size_t channels, std::size_t depth)
      : channels_(channels), depth_(depth),
        horizontal_(channels * depth, Length3Filter::identity()),
        vertical_(channels * depth, Length3Filter::identity()) {
    require(channels > 0, "AR kernel needs at least one channel");
    require(depth > 0, "AR cascade depth must be at least 1");
  }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t depth() const noexcept { return depth_; }

  Length3Filter& horizontal(std::size_t t, std::size_t q) noexcept { return horizontal_[t * depth_ + q]; }
  const Length3Filter& horizontal(std::size_t t, std::size_t q) const noexcept {
    return horizontal_[t * depth_ + q];
  }
  Length3Filter& vertical(std::size_t t, std::size_t q) noexcept { return vertical_[t * depth_ + q]; }
  const Length3Filter& vertical(std::size_t t, std::size_t q) const noexcept {
    return vertical_[t * depth_ + q];
  }

  std::span<const Length3Filter> horizontal_factors(std::size_t t) const {
    require(t < channels_, "channel index out of range");
    return {horizontal_.data() + t * depth_, depth_};
  }
  std::span<const Length3Filter> vertical_factors(std::size_t t) const {
    require(t < channels_, "channel index out of range");
    return {vertical_.data() + t * depth_, depth_};
  }

  bool all_stable() const {
    for (const auto& f : horizontal_)
      if (!is_stable(f)) return false;
    for (const auto& g : vertical_)
      if (!is_stable(g)) return false;
    return true;
  }

  // Product of per-factor margins; a lower bound on |A hat| for this channel.
  double spectrum_lower_bound(std::size_t t) const {
    double bound = 1.0;
    for (const auto& f : horizontal_factors(t)) bound *= armanet::spectrum_lower_bound(f);
    for (const auto& g : vertical_factors(t)) bound *= armanet::spectrum_lower_bound(g);
    return bound;
  }

  std::vector<Length3Filter>& horizontal_storage() noexcept { return horizontal_; }
  std::vector<Length3Filter>& vertical_storage() noexcept { return vertical_; }
  const std::vector<Length3Filter>& horizontal_storage() const noexcept { return horizontal_; }
  const std::vector<Length3Filter>& vertical_storage() const noexcept { return vertical_; }

 private:
  std::size_t channels_, depth_;
  std::vector<Length3Filter> horizontal_;
  std::vector<Length3Filter> vertical_;
};

/// (2Q+1) x (2Q+1) kernel: rows follow the vertical cascade, columns the horizontal one.
inline Kernel2D materialize_2d(const SeparableArKernel& k, std::size_t channel) {
  require(channel < k.channels(), "channel index out of range");
  return Kernel2D::outer(compose_1d(k.vertical_factors(channel)), compose_1d(k.horizontal_factors(channel)));
}

/// Learnable counterpart of SeparableArKernel: one ReparamFilter per factor.
class ReparamArKernel {
 public:
  ReparamArKernel(std::size_t channels, std::size_t depth)
      : channels_(channels), depth_(depth), horizontal_(channels * depth), vertical_(channels * depth) {
    require(channels > 0, "AR kernel needs at least one channel");
    require(depth > 0, "AR cascade depth must be at least 1");
  }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t depth() const noexcept { return depth_; }

  ReparamFilter& horizontal(std::size_t t, std::size_t q) noexcept { return horizontal_[t * depth_ + q]; }
  const ReparamFilter& horizontal(std::size_t t, std::size_t q) const noexcept {
    return horizontal_[t * depth_ + q];
  }
  ReparamFilter& vertical(std::size_t t, std::size_t q) noexcept { return vertical_[t * depth_ + q]; }
  const ReparamFilter& vertical(std::size_t t, std::size_t q) const noexcept {
    return vertical_[t * depth_ + q];
  }

  std::vector<ReparamFilter>& horizontal_storage() noexcept { return horizontal_; }
  std::vector<ReparamFilter>& vertical_storage() noexcept { return vertical_; }
  const std::vector<ReparamFilter>& horizontal_storage() const noexcept { return horizontal_; }
  const std::vector<ReparamFilter>& vertical_storage() const noexcept { return vertical_; }

  SeparableArKernel materialize() const {
    SeparableArKernel out(channels_, depth_);
    for (std::size_t i = 0; i < horizontal_.size(); ++i) {
      out.horizontal_storage()[i] = armanet::materialize(horizontal_[i]);
      out.vertical_storage()[i] = armanet::materialize(vertical_[i]);
    }
    return out;
  }

 private:
  std::size_t channels_, depth_;
  std::vector<ReparamFilter> horizontal_;
  std::vector<ReparamFilter> vertical_;
};

}  // namespace armanet
