#pragma once

// Independent reference computations shared by the test suites.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "armanet/tensor.hpp"

namespace armanet::testing {

inline std::vector<Complex> naive_dft(const std::vector<Complex>& x) {
  const std::size_t n = x.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{};
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((j * k) % n) / static_cast<double>(n);
      acc += x[j] * Complex(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

// Direct O(N^4) double sum per channel.
inline SpectralTensor naive_dft2(const FieldTensor& x) {
  const std::size_t h = x.height(), w = x.width();
  SpectralTensor out(x.shape());
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t k1 = 0; k1 < h; ++k1)
      for (std::size_t k2 = 0; k2 < w; ++k2) {
        Complex acc{};
        for (std::size_t i1 = 0; i1 < h; ++i1)
          for (std::size_t i2 = 0; i2 < w; ++i2) {
            const double angle = -2.0 * std::numbers::pi *
                                 (static_cast<double>((i1 * k1) % h) / static_cast<double>(h) +
                                  static_cast<double>((i2 * k2) % w) / static_cast<double>(w));
            acc += x(i1, i2, c) * Complex(std::cos(angle), std::sin(angle));
          }
        out(k1, k2, c) = acc;
      }
  return out;
}

inline FieldTensor random_field(std::size_t h, std::size_t w, std::size_t c, std::mt19937_64& rng,
                                double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  FieldTensor f(h, w, c);
  for (double& v : f.data()) v = dist(rng);
  return f;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Small Gaussian elimination used to freeze expected values of tiny systems.
inline std::vector<double> solve_small(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    std::swap(a[c], a[p]);
    std::swap(b[c], b[p]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace armanet::testing

namespace armanet::testing {

// Central differences of f around x, one coordinate at a time.
template <class Fn>
std::vector<double> central_differences(Fn&& f, std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace armanet::testing
