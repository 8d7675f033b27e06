#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "armanet/arma.hpp"
#include "armanet/error.hpp"
#include "armanet/filters.hpp"
#include "armanet/tensor.hpp"

namespace armanet {

/// Central differences (L(theta + h e_i) - L(theta - h e_i)) / 2h per coordinate.
inline std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& loss,
                                            std::vector<double> params, double h) {
  require(h > 0.0, "finite-difference step must be positive");
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss(params);
    params[i] = saved - h;
    const double down = loss(params);
    params[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// Seeded regression task on single-channel I x I fields: uniform noise in
/// [-1, 1] and its circular Gaussian blur. sigma = 0 gives target = input.
struct ToyTask {
  std::vector<FieldTensor> inputs;
  std::vector<FieldTensor> targets;
  double sigma = 0.0;
  std::uint64_t seed = 0;

  static ToyTask make(std::size_t samples, std::size_t grid, double sigma, std::uint64_t seed) {
    require(samples >= 1, "toy task needs at least one sample");
    require(grid >= 1, "toy task grid must be positive");
    require(sigma >= 0.0, "blur width must be non-negative");
    ToyTask task;
    task.sigma = sigma;
    task.seed = seed;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (std::size_t n = 0; n < samples; ++n) {
      FieldTensor x(grid, grid, 1);
      for (double& v : x.data()) v = dist(rng);
      task.targets.push_back(blur(x, sigma));
      task.inputs.push_back(std::move(x));
    }
    return task;
  }

  // Taps exp(-p^2 / 2 sigma^2) for |p| <= 3 sigma (capped below half the grid),
  // scaled to unit energy so the target keeps the input's variance.
  static FieldTensor blur(const FieldTensor& x, double sigma) {
    if (sigma == 0.0) return x;
    const int limit = static_cast<int>((std::min(x.height(), x.width()) - 1) / 2);
    const int half = std::min(limit, static_cast<int>(std::ceil(3.0 * sigma)));
    TapSequence g{-half, std::vector<double>(static_cast<std::size_t>(2 * half + 1))};
    for (int p = -half; p <= half; ++p)
      g.values[static_cast<std::size_t>(p + half)] = std::exp(-0.5 * p * p / (sigma * sigma));
    double energy = 0.0;
    for (double v : g.values) energy += v * v;
    for (double& v : g.values) v /= std::sqrt(energy);
    return circular_conv2(x, Kernel2D::outer(g, g));
  }
};

enum class TrainMode { Reparam, Raw };

struct TrainConfig {
  std::vector<std::size_t> channels{1, 4, 1};  // layer l maps channels[l] -> channels[l + 1]
  std::size_t taps = 3;
  std::size_t depth = 1;  // Q
  std::size_t steps = 500;
  double learning_rate = 1e-2;
  double clip = 3.0;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::Reparam;
  double raw_init_tap = 0.55;  // raw mode seeds fm1 = fp1 = this value
  double divergence_threshold = 1e6;

  void validate() const {
    require(channels.size() >= 2, "network needs at least one layer");
    for (std::size_t c : channels) require(c >= 1, "layer channel counts must be positive");
    require(taps % 2 == 1, "MA tap count must be odd");
    require(depth >= 1, "AR cascade depth must be at least 1");
    require(steps >= 1, "steps must be at least 1");
    require(learning_rate > 0.0, "learning rate must be positive");
    require(clip > 0.0, "gradient clip must be positive");
  }
};

/// Stack of ARMA layers trained either through (alpha, beta) or through raw
/// (fm1, fp1) with f0 = 1 held fixed.
class ArmaNetwork {
 public:
  struct Layer {
    MaKernel ma;
    ReparamArKernel reparam;
    SeparableArKernel raw;
  };

  struct Evaluation {
    double loss = 0.0;
    double max_abs_output = 0.0;
    std::vector<double> gradient;  // empty unless requested
  };

  explicit ArmaNetwork(const TrainConfig& config) : mode_(config.mode) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    for (std::size_t l = 0; l + 1 < config.channels.size(); ++l) {
      const std::size_t s = config.channels[l], t = config.channels[l + 1];
      Layer layer{MaKernel(config.taps, config.taps, t, s), ReparamArKernel(t, config.depth),
                  SeparableArKernel(t, config.depth)};
      xavier_uniform(layer.ma, rng);
      if (mode_ == TrainMode::Raw) {
        for (auto& f : layer.raw.horizontal_storage()) f = {config.raw_init_tap, 1.0, config.raw_init_tap};
        for (auto& g : layer.raw.vertical_storage()) g = {config.raw_init_tap, 1.0, config.raw_init_tap};
      }
      layers_.push_back(std::move(layer));
    }
  }

  TrainMode mode() const noexcept { return mode_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  SeparableArKernel ar_kernel(std::size_t l) const {
    return mode_ == TrainMode::Reparam ? layers_[l].reparam.materialize() : layers_[l].raw;
  }

  // Per layer: MA taps, then (alpha, beta) or (fm1, fp1) of every horizontal
  // factor followed by every vertical factor.
  std::vector<double> parameters() const {
    std::vector<double> p;
    for (const auto& layer : layers_) {
      p.insert(p.end(), layer.ma.values().begin(), layer.ma.values().end());
      if (mode_ == TrainMode::Reparam) {
        for (const auto* fs : {&layer.reparam.horizontal_storage(), &layer.reparam.vertical_storage()})
          for (const auto& f : *fs) p.insert(p.end(), {f.alpha, f.beta});
      } else {
        for (const auto* fs : {&layer.raw.horizontal_storage(), &layer.raw.vertical_storage()})
          for (const auto& f : *fs) p.insert(p.end(), {f.fm1, f.fp1});
      }
    }
    return p;
  }

  void set_parameters(std::span<const double> p) {
    std::size_t i = 0;
    auto next = [&]() {
      require(i < p.size(), "parameter vector too short");
      return p[i++];
    };
    for (auto& layer : layers_) {
      for (double& v : layer.ma.values()) v = next();
      if (mode_ == TrainMode::Reparam) {
        for (auto* fs : {&layer.reparam.horizontal_storage(), &layer.reparam.vertical_storage()})
          for (auto& f : *fs) {
            f.alpha = next();
            f.beta = next();
          }
      } else {
        for (auto* fs : {&layer.raw.horizontal_storage(), &layer.raw.vertical_storage()})
          for (auto& f : *fs) {
            f.fm1 = next();
            f.fp1 = next();
          }
      }
    }
    require(i == p.size(), "parameter vector too long");
  }

  FieldTensor forward(const FieldTensor& x) const {
    FieldTensor y = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) y = arma_forward(y, layers_[l].ma, ar_kernel(l)).output;
    return y;
  }

  /// Loss 1/(2 N I^2) sum |Y - target|^2 over the task, with the gradient
  /// laid out as parameters() when requested.
  Evaluation evaluate(const ToyTask& task, bool with_gradient) const {
    require(!task.inputs.empty(), "task has no samples");
    std::vector<SeparableArKernel> ar;
    for (std::size_t l = 0; l < layers_.size(); ++l) ar.push_back(ar_kernel(l));
    const double scale = 1.0 / static_cast<double>(task.inputs.size() * task.inputs[0].size());

    Evaluation out;
    std::vector<double> grad;
    if (with_gradient) grad.assign(parameters().size(), 0.0);
    for (std::size_t n = 0; n < task.inputs.size(); ++n) {
      std::vector<FieldTensor> inputs;
      std::vector<LayerCache> caches;
      FieldTensor y = task.inputs[n];
      for (std::size_t l = 0; l < layers_.size(); ++l) {
        inputs.push_back(y);
        ArForwardResult fwd = arma_forward(y, layers_[l].ma, ar[l]);
        y = std::move(fwd.output);
        caches.push_back(std::move(fwd.cache));
      }
      require(y.shape() == task.targets[n].shape(), "network output does not match the target shape");
      FieldTensor residual(y.shape());
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y.data()[i] - task.targets[n].data()[i];
        residual.data()[i] = r * scale;
        out.loss += 0.5 * r * r * scale;
        out.max_abs_output = std::max(out.max_abs_output, std::abs(y.data()[i]));
      }
      if (!with_gradient) continue;

      FieldTensor d = std::move(residual);
      std::vector<ArmaGradients> per_layer;  // last layer first
      for (std::size_t l = layers_.size(); l-- > 0;) {
        per_layer.push_back(arma_backward(d, inputs[l], layers_[l].ma, ar[l], caches[l]));
        d = per_layer.back().d_input;
      }
      std::reverse(per_layer.begin(), per_layer.end());
      accumulate(per_layer, grad);
    }
    out.gradient = std::move(grad);
    return out;
  }

 private:
  void accumulate(const std::vector<ArmaGradients>& per_layer, std::vector<double>& grad) const {
    std::size_t i = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const ArmaGradients& g = per_layer[l];
      for (double v : g.d_ma.values()) grad[i++] += v;
      const auto& hs = g.d_factors.horizontal;
      const auto& vs = g.d_factors.vertical;
      for (const auto* fs : {&hs, &vs}) {
        const bool is_h = fs == &hs;
        for (std::size_t k = 0; k < fs->size(); ++k) {
          const auto& tap_grad = (*fs)[k];
          if (mode_ == TrainMode::Reparam) {
            const ReparamFilter& p =
                is_h ? layers_[l].reparam.horizontal_storage()[k] : layers_[l].reparam.vertical_storage()[k];
            const ReparamGradient r = reparam_gradient(p, tap_grad[0], tap_grad[2]);
            grad[i++] += r.alpha;
            grad[i++] += r.beta;
          } else {
            grad[i++] += tap_grad[0];
            grad[i++] += tap_grad[2];
          }
        }
      }
    }
  }

  TrainMode mode_;
  std::vector<Layer> layers_;
};

struct TraceRow {
  std::size_t step = 0;
  double loss = 0.0;
  double max_abs_output = 0.0;
  std::vector<double> layer_mean_abs_ar_sum;  // per layer, mean |fm1 + fp1| over all factors

  double mean_abs_ar_sum() const noexcept {
    double s = 0.0;
    for (double v : layer_mean_abs_ar_sum) s += v;
    return layer_mean_abs_ar_sum.empty() ? 0.0 : s / static_cast<double>(layer_mean_abs_ar_sum.size());
  }
};

struct TrainResult {
  std::vector<TraceRow> trace;  // rows 0..steps; row s is evaluated before update s
  std::optional<std::size_t> divergence_step;
  ArmaNetwork network;

  bool diverged() const noexcept { return divergence_step.has_value(); }
};

namespace detail {

inline std::vector<double> layer_ar_sums(const ArmaNetwork& net) {
  std::vector<double> out;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const SeparableArKernel ar = net.ar_kernel(l);
    double s = 0.0;
    for (const auto& f : ar.horizontal_storage()) s += std::abs(f.fm1 + f.fp1);
    for (const auto& g : ar.vertical_storage()) s += std::abs(g.fm1 + g.fp1);
    out.push_back(s / static_cast<double>(2 * ar.horizontal_storage().size()));
  }
  return out;
}

}  // namespace detail

/// Plain SGD with global-norm gradient clipping. Divergence (non-finite loss or
/// gradient, max |output| above the threshold, or a singular AR spectrum) ends
/// the run and is recorded rather than thrown.
inline TrainResult train(const ToyTask& task, const TrainConfig& config, ArmaNetwork initial) {
  config.validate();
  require(initial.mode() == config.mode, "initial network mode does not match the config");
  TrainResult result{{}, std::nullopt, std::move(initial)};
  ArmaNetwork& net = result.network;
  std::vector<double> params = net.parameters();

  for (std::size_t step = 0; step <= config.steps; ++step) {
    if (net.mode() == TrainMode::Reparam)
      for (std::size_t l = 0; l < net.layers().size(); ++l)
        if (!net.ar_kernel(l).all_stable())
          throw NumericError("reparameterized AR factor left the stable strip at step " + std::to_string(step));

    TraceRow row{step, 0.0, 0.0, detail::layer_ar_sums(net)};
    const bool update = step < config.steps;
    ArmaNetwork::Evaluation eval;
    try {
      eval = net.evaluate(task, update);
    } catch (const SingularSpectrumError&) {
      row.loss = row.max_abs_output = std::numeric_limits<double>::infinity();
      result.trace.push_back(std::move(row));
      result.divergence_step = step;
      break;
    }
    row.loss = eval.loss;
    row.max_abs_output = eval.max_abs_output;
    result.trace.push_back(row);

    double norm2 = 0.0;
    for (double g : eval.gradient) norm2 += g * g;
    if (!std::isfinite(eval.loss) || !std::isfinite(norm2) || !(eval.max_abs_output <= config.divergence_threshold)) {
      result.divergence_step = step;
      break;
    }
    if (!update) break;

    const double norm = std::sqrt(norm2);
    const double factor = norm > config.clip ? config.clip / norm : 1.0;
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * factor * eval.gradient[i];
    net.set_parameters(params);
  }
  return result;
}

inline TrainResult train(const ToyTask& task, const TrainConfig& config) {
  return train(task, config, ArmaNetwork(config));
}

inline constexpr std::size_t kCoefficientBins = 41;

/// Histogram of tanh(beta) over [-1, 1] in 41 equal bins, one count per factor.
struct CoefficientHistogram {
  std::array<std::size_t, kCoefficientBins> counts{};
  std::vector<double> values;

  static double bin_width() noexcept { return 2.0 / static_cast<double>(kCoefficientBins); }
  static double bin_center(std::size_t b) noexcept { return -1.0 + (static_cast<double>(b) + 0.5) * bin_width(); }

  // Fraction of coefficients whose magnitude falls in [lo, hi).
  double mass_between(double lo, double hi) const noexcept {
    if (values.empty()) return 0.0;
    std::size_t n = 0;
    for (double v : values)
      if (std::abs(v) >= lo && std::abs(v) < hi) ++n;
    return static_cast<double>(n) / static_cast<double>(values.size());
  }
};

inline CoefficientHistogram learned_coefficient_summary(const ArmaNetwork& net) {
  require(net.mode() == TrainMode::Reparam, "coefficient summary needs reparameterized layers");
  CoefficientHistogram h;
  for (const auto& layer : net.layers())
    for (const auto* fs : {&layer.reparam.horizontal_storage(), &layer.reparam.vertical_storage()})
      for (const auto& f : *fs) {
        const double t = std::tanh(f.beta);
        h.values.push_back(t);
        const auto b = static_cast<std::size_t>(std::floor((t + 1.0) / CoefficientHistogram::bin_width()));
        ++h.counts[std::min(b, kCoefficientBins - 1)];
      }
  return h;
}

}  // namespace armanet
