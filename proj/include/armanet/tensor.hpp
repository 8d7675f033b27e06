#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "armanet/error.hpp"

namespace armanet {

using Complex = std::complex<double>;

// Spatial extent of a rank-3 field, (height, width, channels).
struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t plane() const noexcept { return height * width; }
  std::size_t size() const noexcept { return height * width * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense rank-3 array stored row-major in (i1, i2, c) order.
///
/// Channels are the fastest-varying index so a pixel's channel vector is
/// contiguous. Instantiated as FieldTensor (real) and SpectralTensor (complex).
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  BasicTensor(std::size_t height, std::size_t width, std::size_t channels)
      : shape_{height, width, channels}, data_(height * width * channels, T{}) {
    require(height > 0 && width > 0 && channels > 0, "tensor dimensions must be positive");
  }

  explicit BasicTensor(Shape shape) : BasicTensor(shape.height, shape.width, shape.channels) {}

  // Takes ownership of external data; rejects wrong lengths and non-finite entries.
  BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    require(shape.height > 0 && shape.width > 0 && shape.channels > 0,
            "tensor dimensions must be positive");
    require(data_.size() == shape.size(), "tensor data length does not match its shape");
    for (const T& v : data_) require(is_finite(v), "tensor data contains a non-finite entry");
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t index(std::size_t i1, std::size_t i2, std::size_t c) const noexcept {
    return (i1 * shape_.width + i2) * shape_.channels + c;
  }

  T& operator()(std::size_t i1, std::size_t i2, std::size_t c = 0) noexcept {
    return data_[index(i1, i2, c)];
  }
  const T& operator()(std::size_t i1, std::size_t i2, std::size_t c = 0) const noexcept {
    return data_[index(i1, i2, c)];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }

  BasicTensor& operator+=(const BasicTensor& rhs) {
    require(shape_ == rhs.shape_, "tensor shapes differ");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
    return *this;
  }

  BasicTensor& operator*=(T scale) noexcept {
    for (T& v : data_) v *= scale;
    return *this;
  }

  friend BasicTensor operator+(BasicTensor lhs, const BasicTensor& rhs) { return lhs += rhs; }
  friend BasicTensor operator*(T scale, BasicTensor rhs) { return rhs *= scale; }

  // Copies one channel out as a single-channel tensor.
  BasicTensor channel(std::size_t c) const {
    require(c < shape_.channels, "channel index out of range");
    BasicTensor out(shape_.height, shape_.width, 1);
    for (std::size_t i = 0; i < shape_.plane(); ++i) out.data_[i] = data_[i * shape_.channels + c];
    return out;
  }

  void set_channel(std::size_t c, const BasicTensor& plane) {
    require(c < shape_.channels, "channel index out of range");
    require(plane.height() == shape_.height && plane.width() == shape_.width &&
                plane.channels() == 1,
            "plane shape does not match tensor");
    for (std::size_t i = 0; i < shape_.plane(); ++i) data_[i * shape_.channels + c] = plane.data_[i];
  }

 private:
  static bool is_finite(double v) noexcept { return std::isfinite(v); }
  static bool is_finite(const Complex& v) noexcept {
    return std::isfinite(v.real()) && std::isfinite(v.imag());
  }

  Shape shape_{};
  std::vector<T> data_;
};

using FieldTensor = BasicTensor<double>;
using SpectralTensor = BasicTensor<Complex>;

inline double max_abs(std::span<const double> values) noexcept {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs_diff(const FieldTensor& a, const FieldTensor& b) {
  require(a.shape() == b.shape(), "tensor shapes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

/// Circularly shifts every channel by (s1, s2): out(i1 + s1, i2 + s2) = in(i1, i2).
template <class T>
BasicTensor<T> circular_shift(const BasicTensor<T>& in, std::ptrdiff_t s1, std::ptrdiff_t s2) {
  const auto h = static_cast<std::ptrdiff_t>(in.height());
  const auto w = static_cast<std::ptrdiff_t>(in.width());
  BasicTensor<T> out(in.shape());
  for (std::ptrdiff_t i1 = 0; i1 < h; ++i1) {
    const auto o1 = static_cast<std::size_t>(((i1 + s1) % h + h) % h);
    for (std::ptrdiff_t i2 = 0; i2 < w; ++i2) {
      const auto o2 = static_cast<std::size_t>(((i2 + s2) % w + w) % w);
      for (std::size_t c = 0; c < in.channels(); ++c)
        out(o1, o2, c) = in(static_cast<std::size_t>(i1), static_cast<std::size_t>(i2), c);
    }
  }
  return out;
}

}  // namespace armanet
