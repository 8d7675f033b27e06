#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "armanet/error.hpp"
#include "armanet/tensor.hpp"

namespace armanet {

/// Precomputed transform of a fixed length N.
///
/// Lengths whose prime factors are all <= kMaxDirectRadix run through a
/// recursive mixed-radix decimation-in-time kernel (radix 4 and 2 butterflies
/// are specialized, other radices use a generic O(p^2) butterfly). Any length
/// with a larger prime factor is evaluated with Bluestein's chirp-z algorithm
/// on a power-of-two inner plan.
///
/// Forward is unnormalized, X_k = sum_n x_n exp(-2 pi i n k / N); inverse
/// carries the 1/N factor. Plans are immutable and may be shared across threads.
class FftPlan {
 public:
  static constexpr std::size_t kMaxDirectRadix = 13;

  explicit FftPlan(std::size_t n) : n_(n) {
    require(n > 0, "FFT length must be positive");
    std::size_t rest = n;
    std::size_t p = 4;
    while (rest > 1) {
      while (rest % p != 0) {
        switch (p) {
          case 4: p = 2; break;
          case 2: p = 3; break;
          default: p += 2; break;
        }
        if (p * p > rest) p = rest;
      }
      rest /= p;
      factors_.push_back(p);
      factors_.push_back(rest);
      max_radix_ = std::max(max_radix_, p);
    }

    if (max_radix_ > kMaxDirectRadix) {
      init_bluestein();
    } else {
      twiddles_.resize(n);
      for (std::size_t i = 0; i < n; ++i) twiddles_[i] = unit_root(i, n);
    }
  }

  std::size_t size() const noexcept { return n_; }
  bool uses_bluestein() const noexcept { return inner_ != nullptr; }

  // Radices in application order (outermost first).
  std::vector<std::size_t> radices() const {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < factors_.size(); i += 2) r.push_back(factors_[i]);
    return r;
  }

  void forward(std::span<const Complex> in, std::span<Complex> out) const {
    check_lengths(in.size(), out.size());
    if (n_ == 1) {
      out[0] = in[0];
      return;
    }
    if (uses_bluestein()) {
      bluestein(in, out);
      return;
    }
    if (in.data() == out.data()) {
      std::vector<Complex> copy(in.begin(), in.end());
      direct(copy.data(), out.data());
    } else {
      direct(in.data(), out.data());
    }
  }

  void inverse(std::span<const Complex> in, std::span<Complex> out) const {
    check_lengths(in.size(), out.size());
    std::vector<Complex> conj_in(n_);
    for (std::size_t i = 0; i < n_; ++i) conj_in[i] = std::conj(in[i]);
    forward(conj_in, out);
    const double scale = 1.0 / static_cast<double>(n_);
    for (auto& v : out) v = std::conj(v) * scale;
  }

  std::vector<Complex> forward(std::span<const Complex> in) const {
    std::vector<Complex> out(n_);
    forward(in, out);
    return out;
  }

  std::vector<Complex> inverse(std::span<const Complex> in) const {
    std::vector<Complex> out(n_);
    inverse(in, out);
    return out;
  }

 private:
  // exp(-2 pi i k / n) with k reduced mod n first.
  static Complex unit_root(std::size_t k, std::size_t n) {
    const double angle =
        -2.0 * std::numbers::pi * static_cast<double>(k % n) / static_cast<double>(n);
    return {std::cos(angle), std::sin(angle)};
  }

  void check_lengths(std::size_t in, std::size_t out) const {
    if (in != n_ || out != n_)
      throw UsageError("FFT plan of length " + std::to_string(n_) +
                       " applied to a sequence of length " + std::to_string(in));
  }

  void direct(const Complex* in, Complex* out) const {
    std::vector<Complex> scratch(max_radix_);
    work(out, in, 1, factors_.data(), scratch.data());
  }

  void work(Complex* out, const Complex* in, std::size_t fstride,
            const std::size_t* factors, Complex* scratch) const {
    const std::size_t p = factors[0];
    const std::size_t m = factors[1];
    Complex* const begin = out;
    Complex* const end = out + p * m;
    if (m == 1) {
      for (; out != end; ++out, in += fstride) *out = *in;
    } else {
      for (; out != end; out += m, in += fstride) work(out, in, fstride * p, factors + 2, scratch);
    }
    switch (p) {
      case 2: butterfly2(begin, fstride, m); break;
      case 4: butterfly4(begin, fstride, m); break;
      default: butterfly_generic(begin, fstride, p, m, scratch); break;
    }
  }

  void butterfly2(Complex* out, std::size_t fstride, std::size_t m) const {
    Complex* out2 = out + m;
    for (std::size_t k = 0; k < m; ++k) {
      const Complex t = out2[k] * twiddles_[k * fstride];
      out2[k] = out[k] - t;
      out[k] += t;
    }
  }

  void butterfly4(Complex* out, std::size_t fstride, std::size_t m) const {
    for (std::size_t k = 0; k < m; ++k) {
      const Complex s0 = out[k + m] * twiddles_[k * fstride];
      const Complex s1 = out[k + 2 * m] * twiddles_[2 * k * fstride];
      const Complex s2 = out[k + 3 * m] * twiddles_[3 * k * fstride];
      const Complex s5 = out[k] - s1;
      const Complex a = out[k] + s1;
      const Complex s3 = s0 + s2;
      const Complex s4 = s0 - s2;
      out[k + 2 * m] = a - s3;
      out[k] = a + s3;
      out[k + m] = {s5.real() + s4.imag(), s5.imag() - s4.real()};
      out[k + 3 * m] = {s5.real() - s4.imag(), s5.imag() + s4.real()};
    }
  }

  void butterfly_generic(Complex* out, std::size_t fstride, std::size_t p, std::size_t m,
                         Complex* scratch) const {
    for (std::size_t u = 0; u < m; ++u) {
      for (std::size_t q = 0, k = u; q < p; ++q, k += m) scratch[q] = out[k];
      for (std::size_t q1 = 0, k = u; q1 < p; ++q1, k += m) {
        std::size_t twidx = 0;
        Complex acc = scratch[0];
        for (std::size_t q = 1; q < p; ++q) {
          twidx += fstride * k;
          if (twidx >= n_) twidx -= n_;
          acc += scratch[q] * twiddles_[twidx];
        }
        out[k] = acc;
      }
    }
  }

  void init_bluestein() {
    std::size_t m = 1;
    while (m < 2 * n_ - 1) m <<= 1;
    inner_ = std::make_shared<const FftPlan>(m);
    chirp_.resize(n_);
    // n^2 mod 2N keeps the chirp angle small and exact for large n.
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t sq = (k * k) % (2 * n_);
      const double angle = -std::numbers::pi * static_cast<double>(sq) / static_cast<double>(n_);
      chirp_[k] = {std::cos(angle), std::sin(angle)};
    }
    std::vector<Complex> b(m, Complex{});
    b[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n_; ++k) b[k] = b[m - k] = std::conj(chirp_[k]);
    chirp_spectrum_ = inner_->forward(b);
  }

  void bluestein(std::span<const Complex> in, std::span<Complex> out) const {
    const std::size_t m = inner_->size();
    std::vector<Complex> a(m, Complex{});
    for (std::size_t k = 0; k < n_; ++k) a[k] = in[k] * chirp_[k];
    std::vector<Complex> spectrum = inner_->forward(a);
    for (std::size_t k = 0; k < m; ++k) spectrum[k] *= chirp_spectrum_[k];
    inner_->inverse(spectrum, a);
    for (std::size_t k = 0; k < n_; ++k) out[k] = a[k] * chirp_[k];
  }

  std::size_t n_;
  std::size_t max_radix_ = 1;
  std::vector<std::size_t> factors_;  // (radix, remaining length) pairs
  std::vector<Complex> twiddles_;

  std::shared_ptr<const FftPlan> inner_;
  std::vector<Complex> chirp_;
  std::vector<Complex> chirp_spectrum_;
};

inline std::vector<Complex> dft1(std::span<const Complex> x, const FftPlan& plan) {
  return plan.forward(x);
}

inline std::vector<Complex> idft1(std::span<const Complex> x, const FftPlan& plan) {
  return plan.inverse(x);
}

/// Separable 2D transform over the spatial axes of a rank-3 tensor, one
/// channel at a time: row transforms first, then column transforms.
class Dft2Plan {
 public:
  Dft2Plan(std::size_t height, std::size_t width)
      : rows_(std::make_shared<const FftPlan>(width)),
        cols_(height == width ? rows_ : std::make_shared<const FftPlan>(height)) {}

  std::size_t height() const noexcept { return cols_->size(); }
  std::size_t width() const noexcept { return rows_->size(); }

  SpectralTensor forward(const FieldTensor& x) const {
    SpectralTensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i];
    apply(out, false);
    return out;
  }

  SpectralTensor forward(SpectralTensor x) const {
    apply(x, false);
    return x;
  }

  SpectralTensor inverse(SpectralTensor x) const {
    apply(x, true);
    return x;
  }

  // Inverse transform keeping only the real part; for spectra of real fields.
  FieldTensor inverse_real(const SpectralTensor& x) const {
    SpectralTensor full = inverse(x);
    FieldTensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = full.data()[i].real();
    return out;
  }

 private:
  void apply(SpectralTensor& x, bool inverse) const {
    require(x.height() == height() && x.width() == width(), "2D DFT plan shape mismatch");
    const std::size_t h = x.height(), w = x.width(), nc = x.channels();
    // Columns are transformed kBlock at a time so the gather reads whole cache lines.
    constexpr std::size_t kBlock = 8;
    std::vector<Complex> storage(nc > 1 ? h * w : 0), block(kBlock * h), line(std::max(h, w));
    // Inverse via conj(F(conj(x))) / N, so only forward plans are needed.
    const double scale = inverse ? 1.0 / static_cast<double>(h * w) : 1.0;
    for (std::size_t c = 0; c < nc; ++c) {
      // A single-channel tensor is already a contiguous plane.
      const std::span<Complex> plane = nc > 1 ? std::span<Complex>(storage) : x.data();
      for (std::size_t i = 0; i < h * w; ++i) {
        const Complex v = x.data()[i * nc + c];
        plane[i] = inverse ? std::conj(v) : v;
      }
      for (std::size_t i1 = 0; i1 < h; ++i1) {
        const std::span<Complex> row(plane.data() + i1 * w, w);
        rows_->forward(row, std::span<Complex>(line.data(), w));
        std::copy_n(line.begin(), w, row.begin());
      }
      for (std::size_t j0 = 0; j0 < w; j0 += kBlock) {
        const std::size_t nb = std::min(kBlock, w - j0);
        for (std::size_t i1 = 0; i1 < h; ++i1)
          for (std::size_t b = 0; b < nb; ++b) block[b * h + i1] = plane[i1 * w + j0 + b];
        for (std::size_t b = 0; b < nb; ++b) {
          cols_->forward(std::span<const Complex>(block.data() + b * h, h), std::span<Complex>(line.data(), h));
          std::copy_n(line.begin(), h, block.begin() + static_cast<std::ptrdiff_t>(b * h));
        }
        for (std::size_t i1 = 0; i1 < h; ++i1)
          for (std::size_t b = 0; b < nb; ++b) plane[i1 * w + j0 + b] = block[b * h + i1];
      }
      for (std::size_t i = 0; i < h * w; ++i)
        x.data()[i * nc + c] = inverse ? std::conj(plane[i]) * scale : plane[i];
    }
  }

  std::shared_ptr<const FftPlan> rows_;
  std::shared_ptr<const FftPlan> cols_;
};

inline SpectralTensor dft2(const FieldTensor& x) {
  return Dft2Plan(x.height(), x.width()).forward(x);
}

inline SpectralTensor dft2(const SpectralTensor& x) {
  return Dft2Plan(x.height(), x.width()).forward(x);
}

inline SpectralTensor idft2(const SpectralTensor& x) {
  return Dft2Plan(x.height(), x.width()).inverse(x);
}

inline FieldTensor idft2_real(const SpectralTensor& x) {
  return Dft2Plan(x.height(), x.width()).inverse_real(x);
}

}  // namespace armanet
