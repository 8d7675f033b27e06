#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "armanet/error.hpp"
#include "armanet/fft.hpp"
#include "armanet/tensor.hpp"

namespace armanet {

/// 1D taps at consecutive integer offsets starting at `first_offset`.
struct TapSequence {
  int first_offset = 0;
  std::vector<double> values;

  int last_offset() const noexcept { return first_offset + static_cast<int>(values.size()) - 1; }
  double at(int offset) const noexcept {
    const int i = offset - first_offset;
    return (i < 0 || i >= static_cast<int>(values.size())) ? 0.0 : values[static_cast<std::size_t>(i)];
  }
  double sum() const noexcept {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
};

/// Full linear convolution of two tap sequences.
inline TapSequence convolve(const TapSequence& a, const TapSequence& b) {
  if (a.values.empty() || b.values.empty()) return {a.first_offset + b.first_offset, {}};
  TapSequence out{a.first_offset + b.first_offset,
                  std::vector<double>(a.values.size() + b.values.size() - 1, 0.0)};
  for (std::size_t i = 0; i < a.values.size(); ++i)
    for (std::size_t j = 0; j < b.values.size(); ++j) out.values[i + j] += a.values[i] * b.values[j];
  return out;
}

inline TapSequence reversed(const TapSequence& a) {
  return {-a.last_offset(), std::vector<double>(a.values.rbegin(), a.values.rend())};
}

/// Odd-sized 2D taps with the origin at the center, offsets in
/// [-half_height, half_height] x [-half_width, half_width].
class Kernel2D {
 public:
  Kernel2D() : Kernel2D(1, 1) {}

  Kernel2D(std::size_t tap_height, std::size_t tap_width)
      : tap_height_(tap_height), tap_width_(tap_width), taps_(tap_height * tap_width, 0.0) {
    require(tap_height % 2 == 1 && tap_width % 2 == 1, "kernel tap counts must be odd");
  }

  Kernel2D(std::size_t tap_height, std::size_t tap_width, std::vector<double> taps)
      : tap_height_(tap_height), tap_width_(tap_width), taps_(std::move(taps)) {
    require(tap_height % 2 == 1 && tap_width % 2 == 1, "kernel tap counts must be odd");
    require(taps_.size() == tap_height * tap_width, "kernel data length does not match its shape");
  }

  static Kernel2D delta() {
    Kernel2D k(1, 1);
    k.taps_[0] = 1.0;
    return k;
  }

  // Outer product: entry (p1, p2) = rows.at(p1) * cols.at(p2). Both sequences
  // must be centered (first_offset == -(size - 1) / 2).
  static Kernel2D outer(const TapSequence& rows, const TapSequence& cols) {
    require(rows.values.size() % 2 == 1 && rows.first_offset == -static_cast<int>(rows.values.size() / 2),
            "outer product needs centered row taps");
    require(cols.values.size() % 2 == 1 && cols.first_offset == -static_cast<int>(cols.values.size() / 2),
            "outer product needs centered column taps");
    Kernel2D k(rows.values.size(), cols.values.size());
    for (std::size_t r = 0; r < rows.values.size(); ++r)
      for (std::size_t c = 0; c < cols.values.size(); ++c)
        k.taps_[r * cols.values.size() + c] = rows.values[r] * cols.values[c];
    return k;
  }

  std::size_t tap_height() const noexcept { return tap_height_; }
  std::size_t tap_width() const noexcept { return tap_width_; }
  int half_height() const noexcept { return static_cast<int>(tap_height_ / 2); }
  int half_width() const noexcept { return static_cast<int>(tap_width_ / 2); }

  double& at(int p1, int p2) noexcept { return taps_[slot(p1, p2)]; }
  double at(int p1, int p2) const noexcept { return taps_[slot(p1, p2)]; }

  std::vector<double>& taps() noexcept { return taps_; }
  const std::vector<double>& taps() const noexcept { return taps_; }

 private:
  std::size_t slot(int p1, int p2) const noexcept {
    return static_cast<std::size_t>(p1 + half_height()) * tap_width_ +
           static_cast<std::size_t>(p2 + half_width());
  }

  std::size_t tap_height_, tap_width_;
  std::vector<double> taps_;
};

inline std::size_t wrap_index(long long offset, std::size_t n) noexcept {
  const auto m = static_cast<long long>(n);
  return static_cast<std::size_t>(((offset % m) + m) % m);
}

namespace detail {

// Span of the nonzero taps along each axis, or {-1, -1} for an all-zero kernel.
inline std::pair<int, int> nonzero_extent(const Kernel2D& k) {
  int r_lo = 1 << 30, r_hi = -(1 << 30), c_lo = 1 << 30, c_hi = -(1 << 30);
  for (int p1 = -k.half_height(); p1 <= k.half_height(); ++p1)
    for (int p2 = -k.half_width(); p2 <= k.half_width(); ++p2)
      if (k.at(p1, p2) != 0.0) {
        r_lo = std::min(r_lo, p1);
        r_hi = std::max(r_hi, p1);
        c_lo = std::min(c_lo, p2);
        c_hi = std::max(c_hi, p2);
      }
  if (r_hi < r_lo) return {-1, -1};
  return {r_hi - r_lo, c_hi - c_lo};
}

}  // namespace detail

// Throws UsageError unless the dilated nonzero footprint fits in the grid.
inline void check_footprint(const Kernel2D& k, std::size_t height, std::size_t width,
                            std::size_t dilation) {
  require(dilation >= 1, "dilation must be at least 1");
  const auto [rows, cols] = detail::nonzero_extent(k);
  if (rows < 0) return;
  if (dilation * static_cast<std::size_t>(rows) >= height ||
      dilation * static_cast<std::size_t>(cols) >= width)
    throw UsageError("dilated kernel footprint (" + std::to_string(dilation * rows + 1) + " x " +
                     std::to_string(dilation * cols + 1) + ") exceeds field " +
                     std::to_string(height) + " x " + std::to_string(width));
}

/// Places tap (p1, p2) at ((d p1) mod I1, (d p2) mod I2) of a zero field.
inline FieldTensor embed_kernel(const Kernel2D& k, std::size_t height, std::size_t width,
                                std::size_t dilation = 1) {
  check_footprint(k, height, width, dilation);
  FieldTensor out(height, width, 1);
  const auto d = static_cast<long long>(dilation);
  for (int p1 = -k.half_height(); p1 <= k.half_height(); ++p1)
    for (int p2 = -k.half_width(); p2 <= k.half_width(); ++p2)
      out(wrap_index(d * p1, height), wrap_index(d * p2, width)) += k.at(p1, p2);
  return out;
}

/// y(i1, i2) = sum_p k(p1, p2) x((i1 - d p1) mod I1, (i2 - d p2) mod I2), direct summation.
inline FieldTensor circular_conv2(const FieldTensor& x, const Kernel2D& k, std::size_t dilation = 1) {
  require(x.channels() == 1, "circular_conv2 expects a single-channel field");
  check_footprint(k, x.height(), x.width(), dilation);
  const std::size_t h = x.height(), w = x.width();
  const auto d = static_cast<long long>(dilation);
  FieldTensor y(h, w, 1);
  for (int p1 = -k.half_height(); p1 <= k.half_height(); ++p1) {
    for (int p2 = -k.half_width(); p2 <= k.half_width(); ++p2) {
      const double tap = k.at(p1, p2);
      if (tap == 0.0) continue;
      const std::size_t s1 = wrap_index(d * p1, h), s2 = wrap_index(d * p2, w);
      for (std::size_t i1 = 0; i1 < h; ++i1) {
        const std::size_t j1 = (i1 + h - s1) % h;
        for (std::size_t i2 = 0; i2 < w; ++i2) y(i1, i2) += tap * x(j1, (i2 + w - s2) % w);
      }
    }
  }
  return y;
}

inline constexpr double kDefaultSpectrumEpsilon = 1e-8;

/// Element-wise num / den. Any |den| below epsilon raises SingularSpectrumError
/// naming the first offending frequency.
inline SpectralTensor spectral_divide(SpectralTensor num, const SpectralTensor& den,
                                      double epsilon = kDefaultSpectrumEpsilon) {
  require(num.shape() == den.shape(), "spectral_divide shape mismatch");
  const std::size_t w = num.width(), nc = num.channels();
  for (std::size_t i = 0; i < num.size(); ++i) {
    const Complex q = den.data()[i];
    const double mag = std::abs(q);
    if (!(mag >= epsilon)) throw SingularSpectrumError(i / nc / w, i / nc % w, i % nc, mag);
    num.data()[i] /= q;
  }
  return num;
}

}  // namespace armanet

namespace armanet {

/// Rank-4 moving-average kernel W(p1, p2, t, s) with a shared dilation.
class MaKernel {
 public:
  MaKernel(std::size_t tap_height, std::size_t tap_width, std::size_t out_channels,
           std::size_t in_channels, std::size_t dilation = 1)
      : tap_height_(tap_height), tap_width_(tap_width), out_channels_(out_channels),
        in_channels_(in_channels), dilation_(dilation),
        data_(tap_height * tap_width * out_channels * in_channels, 0.0) {
    require(tap_height % 2 == 1 && tap_width % 2 == 1, "MA kernel tap counts must be odd");
    require(out_channels > 0 && in_channels > 0, "MA kernel channel counts must be positive");
    require(dilation >= 1, "dilation must be at least 1");
  }

  // Single-channel kernel (S = T = 1) from 2D taps.
  static MaKernel from_taps(const Kernel2D& taps, std::size_t dilation = 1) {
    MaKernel w(taps.tap_height(), taps.tap_width(), 1, 1, dilation);
    w.data_ = taps.taps();
    return w;
  }

  std::size_t tap_height() const noexcept { return tap_height_; }
  std::size_t tap_width() const noexcept { return tap_width_; }
  int half_height() const noexcept { return static_cast<int>(tap_height_ / 2); }
  int half_width() const noexcept { return static_cast<int>(tap_width_ / 2); }
  std::size_t out_channels() const noexcept { return out_channels_; }
  std::size_t in_channels() const noexcept { return in_channels_; }
  std::size_t dilation() const noexcept { return dilation_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(std::size_t t, std::size_t s, int p1, int p2) noexcept { return data_[slot(t, s, p1, p2)]; }
  double at(std::size_t t, std::size_t s, int p1, int p2) const noexcept {
    return data_[slot(t, s, p1, p2)];
  }

  Kernel2D slice(std::size_t t, std::size_t s) const {
    Kernel2D k(tap_height_, tap_width_);
    for (int p1 = -half_height(); p1 <= half_height(); ++p1)
      for (int p2 = -half_width(); p2 <= half_width(); ++p2) k.at(p1, p2) = at(t, s, p1, p2);
    return k;
  }

  // Zeroed kernel of identical geometry, used to hold gradients.
  MaKernel zeros_like() const {
    return MaKernel(tap_height_, tap_width_, out_channels_, in_channels_, dilation_);
  }

  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

 private:
  std::size_t slot(std::size_t t, std::size_t s, int p1, int p2) const noexcept {
    const auto r = static_cast<std::size_t>(p1 + half_height());
    const auto c = static_cast<std::size_t>(p2 + half_width());
    return ((t * in_channels_ + s) * tap_height_ + r) * tap_width_ + c;
  }

  std::size_t tap_height_, tap_width_, out_channels_, in_channels_, dilation_;
  std::vector<double> data_;
};

}  // namespace armanet
