#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "armanet/arma.hpp"
#include "armanet/erf.hpp"
#include "armanet/error.hpp"
#include "armanet/filters.hpp"
#include "armanet/training.hpp"
#include "io.hpp"

namespace armanet::cli {

using Json = nlohmann::ordered_json;

enum ExitCode : int { kSuccess = 0, kUsage = 1, kNumericFailure = 2, kDiverged = 3 };

/// Denominator floor for gradient relative errors, so near-zero pairs compare absolutely.
inline constexpr double kRelativeErrorFloor = 1e-3;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
}

// When --out names a file, stdout carries the JSON summary; otherwise the
// primary data goes to stdout and the summary to stderr.
inline void emit_summary(const Json& summary, bool data_in_file, std::ostream& out, std::ostream& err) {
  (data_in_file ? out : err) << summary.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// erf
// ---------------------------------------------------------------------------

struct ErfOptions {
  std::string layers;
  std::string mode = "analytic";
  std::size_t grid = 64;
  std::size_t channels = 1;
  std::uint64_t seed = 0;
  std::string init = "uniform";
  double epsilon = kDefaultTruncation;
  std::string out;
};

inline void write_analytic_table(std::ostream& os, const LinearNetSpec& spec) {
  os << "layer,K,d,a,term,radius\n";
  double total = 0.0;
  for (std::size_t l = 0; l < spec.size(); ++l) {
    const double term = layer_variance(spec[l]);
    total += term;
    os << l + 1 << ',' << spec[l].taps << ',' << spec[l].dilation << ',' << format_double(spec[l].ar_coefficient)
       << ',' << format_double(term) << ',' << format_double(std::sqrt(total)) << '\n';
  }
  os << "total,,,," << format_double(total) << ',' << format_double(std::sqrt(total)) << '\n';
}

inline int cmd_erf(const ErfOptions& o, std::ostream& out, std::ostream& err) {
  if (o.layers.empty()) throw UsageError("erf needs --layers");
  const LinearNetSpec spec = parse_layers(o.layers);
  const bool to_file = !o.out.empty();
  std::ofstream file;
  if (to_file) file = open_output(o.out);
  std::ostream& data = to_file ? static_cast<std::ostream&>(file) : out;

  if (o.mode == "analytic") {
    write_analytic_table(data, spec);
    return kSuccess;
  }
  if (o.mode == "empirical-1d") {
    const ErfMap map = empirical_erf_1d(spec, o.epsilon);
    data << "offset,weight\n";
    for (std::size_t c = 0; c < map.cols; ++c) data << map.col_offset(c) << ',' << format_double(map.weights[c]) << '\n';
    const double variance = erf_axis_variance(map).cols;
    const double analytic = std::pow(analytic_radius_arma(spec), 2);
    emit_summary(Json{{"axis_variance", variance},
                      {"analytic_variance", analytic},
                      {"relative_error", std::abs(variance - analytic) / analytic},
                      {"excess_kurtosis", erf_excess_kurtosis(map)}},
                 to_file, out, err);
    return kSuccess;
  }
  if (o.mode == "empirical-2d") {
    if (o.init != "uniform" && o.init != "xavier") throw UsageError("--init must be uniform or xavier");
    const ErfMap map = empirical_erf_2d(spec, {.grid = o.grid,
                                               .channels = o.channels,
                                               .seed = o.seed,
                                               .init = o.init == "xavier" ? KernelInit::Xavier : KernelInit::Uniform});
    for (std::size_t r = 0; r < map.rows; ++r) {
      for (std::size_t c = 0; c < map.cols; ++c) data << (c ? "," : "") << format_double(map.at(r, c));
      data << '\n';
    }
    const AxisVariance v = erf_axis_variance(map);
    const Json summary{{"radial_radius", erf_radius(map)},
                       {"axis_variance_x", v.cols},
                       {"axis_variance_y", v.rows},
                       {"axis_radius", erf_axis_radius(map)},
                       {"analytic_axis_variance", std::pow(analytic_radius_arma(spec), 2)},
                       {"row_origin", map.row_origin},
                       {"col_origin", map.col_origin}};
    if (to_file) open_output(o.out + ".json") << summary.dump(2) << '\n';
    emit_summary(summary, to_file, out, err);
    return kSuccess;
  }
  throw UsageError("--mode must be analytic, empirical-1d or empirical-2d");
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckOptions {
  std::size_t size = 6;
  std::string channels = "1,1";
  std::size_t q = 1;
  std::size_t taps = 3;
  std::uint64_t seed = 0;
  double tol = 1e-5;
  double h = 1e-5;
};

struct GroupResult {
  std::string name;
  std::size_t count = 0;
  double max_relative_error = 0.0;
  struct Failure {
    std::size_t index;
    double analytic, numeric, error;
  };
  std::vector<Failure> failures;
};

// Central differences of `loss` over each pointed-to coordinate.
inline GroupResult check_group(std::string name, const std::vector<double*>& coords,
                               const std::vector<double>& analytic, const std::function<double()>& loss, double h,
                               double tol) {
  require(coords.size() == analytic.size(), "gradient group size mismatch");
  GroupResult g{std::move(name), coords.size(), 0.0, {}};
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double saved = *coords[i];
    *coords[i] = saved + h;
    const double up = loss();
    *coords[i] = saved - h;
    const double down = loss();
    *coords[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double e = relative_error(analytic[i], numeric);
    g.max_relative_error = std::max(g.max_relative_error, e);
    if (!(e <= tol)) g.failures.push_back({i, analytic[i], numeric, e});
  }
  return g;
}

inline std::vector<GroupResult> run_gradcheck(const GradcheckOptions& o) {
  require(o.size >= 1, "--size must be positive");
  if (o.size * o.size > kDenseSolveLimit)
    throw UsageError("gradcheck limited to size^2 <= " + std::to_string(kDenseSolveLimit));
  const auto ch = parse_numbers(o.channels, 2, "--channels");
  require(ch[0] >= 1 && ch[1] >= 1 && ch[0] == std::floor(ch[0]) && ch[1] == std::floor(ch[1]),
          "--channels must be two positive integers S,T");
  require(o.q >= 1, "--q must be at least 1");
  require(o.h > 0.0, "--step must be positive");
  const auto s = static_cast<std::size_t>(ch[0]), t = static_cast<std::size_t>(ch[1]), n = o.size;

  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0), alpha(-1.5, 1.5);
  FieldTensor x(n, n, s), r(n, n, t);
  for (double& v : x.storage()) v = unit(rng);
  ArmaLayerParams params{MaKernel(o.taps, o.taps, t, s), ReparamArKernel(t, o.q)};
  for (double& v : params.ma.values()) v = unit(rng);
  for (auto* fs : {&params.ar.horizontal_storage(), &params.ar.vertical_storage()})
    for (auto& f : *fs) f = {alpha(rng), unit(rng), 1.0};
  for (double& v : r.storage()) v = unit(rng);
  check_footprint(Kernel2D(2 * o.q + 1, 2 * o.q + 1, std::vector<double>((2 * o.q + 1) * (2 * o.q + 1), 1.0)), n, n, 1);

  auto dot = [&r](const FieldTensor& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += y.data()[i] * r.data()[i];
    return acc;
  };
  const ArForwardResult fwd = arma_forward(x, params);
  ArmaGradients g = arma_backward(r, x, params, fwd.cache);
  auto layer_loss = [&] { return dot(arma_forward(x, params).output); };

  std::vector<GroupResult> groups;
  {
    std::vector<double*> c;
    for (double& v : x.storage()) c.push_back(&v);
    groups.push_back(check_group("input", c, g.d_input.storage(), layer_loss, o.h, o.tol));
  }
  {
    std::vector<double*> c;
    for (double& v : params.ma.values()) c.push_back(&v);
    groups.push_back(check_group("ma", c, g.d_ma.values(), layer_loss, o.h, o.tol));
  }
  const FieldTensor ma_out = ma_forward(x, params.ma);
  {
    std::vector<Kernel2D> kernels = materialize_all(params.ar.materialize());
    std::vector<double*> c;
    std::vector<double> analytic;
    for (std::size_t k = 0; k < t; ++k) {
      for (double& v : kernels[k].taps()) c.push_back(&v);
      analytic.insert(analytic.end(), g.d_ar_taps[k].taps().begin(), g.d_ar_taps[k].taps().end());
    }
    groups.push_back(check_group(
        "ar_taps", c, analytic, [&] { return dot(ar_forward(ma_out, kernels).output); }, o.h, o.tol));
  }
  {
    SeparableArKernel raw = params.ar.materialize();
    std::vector<double*> c;
    std::vector<double> analytic;
    for (auto [fs, gs] : {std::pair{&raw.horizontal_storage(), &g.d_factors.horizontal},
                          std::pair{&raw.vertical_storage(), &g.d_factors.vertical}})
      for (std::size_t i = 0; i < fs->size(); ++i) {
        c.insert(c.end(), {&(*fs)[i].fm1, &(*fs)[i].f0, &(*fs)[i].fp1});
        analytic.insert(analytic.end(), (*gs)[i].begin(), (*gs)[i].end());
      }
    groups.push_back(check_group(
        "ar_factors", c, analytic, [&] { return dot(ar_forward(ma_out, raw).output); }, o.h, o.tol));
  }
  {
    std::vector<double*> ca, cb;
    std::vector<double> ga, gb;
    for (auto [fs, gs] : {std::pair{&params.ar.horizontal_storage(), &g.d_horizontal},
                          std::pair{&params.ar.vertical_storage(), &g.d_vertical}})
      for (std::size_t i = 0; i < fs->size(); ++i) {
        ca.push_back(&(*fs)[i].alpha);
        cb.push_back(&(*fs)[i].beta);
        ga.push_back((*gs)[i].alpha);
        gb.push_back((*gs)[i].beta);
      }
    groups.push_back(check_group("alpha", ca, ga, layer_loss, o.h, o.tol));
    groups.push_back(check_group("beta", cb, gb, layer_loss, o.h, o.tol));
  }
  return groups;
}

inline int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out, std::ostream& err) {
  const std::vector<GroupResult> groups = run_gradcheck(o);
  Json report{{"size", o.size}, {"channels", o.channels}, {"q", o.q},     {"seed", o.seed},
              {"h", o.h},       {"tol", o.tol},           {"groups", Json::array()}};
  bool pass = true;
  for (const auto& g : groups) {
    report["groups"].push_back(Json{{"name", g.name}, {"count", g.count}, {"max_relative_error", g.max_relative_error}});
    for (const auto& f : g.failures) {
      pass = false;
      err << "gradcheck: " << g.name << "[" << f.index << "] analytic " << format_double(f.analytic) << " numeric "
          << format_double(f.numeric) << " relative error " << format_double(f.error) << '\n';
    }
  }
  report["pass"] = pass;
  out << report.dump(2) << '\n';
  return pass ? kSuccess : kNumericFailure;
}

// ---------------------------------------------------------------------------
// stability
// ---------------------------------------------------------------------------

struct StabilityOptions {
  std::string filter;
  std::string reparam;
  std::size_t scan = 0;
  std::uint64_t seed = 0;
  double range = 10.0;
};

inline Json describe_filter(const Length3Filter& f) {
  const FilterZeros z = zeros_of(f);
  Json zeros = Json::array(), moduli = Json::array();
  for (std::size_t i = 0; i < z.count; ++i) {
    const Complex root = i == 0 ? z.z1 : z.z2;
    zeros.push_back({root.real() + 0.0, root.imag() + 0.0});
    moduli.push_back(std::abs(root));
  }
  return Json{{"filter", {f.fm1, f.f0, f.fp1}},
              {"stable", is_stable(f)},
              {"sum", f.fm1 + f.fp1},
              {"zeros", zeros},
              {"moduli", moduli},
              {"straddles_unit_circle", z.straddles_unit_circle()}};
}

inline int cmd_stability(const StabilityOptions& o, std::ostream& out, std::ostream& err) {
  const int modes = !o.filter.empty() + !o.reparam.empty() + (o.scan > 0);
  if (modes != 1) throw UsageError("stability takes exactly one of --filter, --reparam or --scan");
  if (!o.filter.empty()) {
    const auto v = parse_numbers(o.filter, 3, "--filter");
    out << describe_filter({v[0], v[1], v[2]}).dump(2) << '\n';
    return kSuccess;
  }
  if (!o.reparam.empty()) {
    const auto parts = split(o.reparam, ',');
    const auto v = parse_numbers(o.reparam, parts.size() == 3 ? 3 : 2, "--reparam");
    const ReparamFilter p{v[0], v[1], v.size() == 3 ? v[2] : 1.0};
    Json j = describe_filter(materialize(p));
    j["alpha"] = p.alpha;
    j["beta"] = p.beta;
    out << j.dump(2) << '\n';
    return kSuccess;
  }
  require(o.range > 0.0, "--range must be positive");
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> dist(-o.range, o.range);
  std::size_t unstable = 0;
  double max_abs_sum = 0.0;
  for (std::size_t i = 0; i < o.scan; ++i) {
    const ReparamFilter p{dist(rng), dist(rng)};
    const Length3Filter f = materialize(p);
    max_abs_sum = std::max(max_abs_sum, std::abs(f.fm1 + f.fp1));
    if (!is_stable(f) || !zeros_of(f).straddles_unit_circle()) {
      ++unstable;
      err << "stability: alpha " << format_double(p.alpha) << " beta " << format_double(p.beta)
          << " materializes to an unstable filter\n";
    }
  }
  out << Json{{"samples", o.scan}, {"seed", o.seed}, {"range", o.range}, {"unstable", unstable},
              {"max_abs_sum", max_abs_sum}}
             .dump(2)
      << '\n';
  return unstable == 0 ? kSuccess : kNumericFailure;
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

struct SolveOptions {
  std::string input;
  std::string ma_kernel;
  std::size_t dilation = 1;
  std::string ar_config;
  std::string out;
  bool oracle = false;
  double oracle_tol = 1e-8;
};

struct ArConfig {
  SeparableArKernel kernel{1, 1};
  double epsilon = kDefaultSpectrumEpsilon;
};

/// {"f": [[fm1, f0, fp1], ...], "g": [...]} or {"f_reparam": [[alpha, beta], ...],
/// "g_reparam": [...]}, plus an optional "epsilon". The shorter cascade is
/// padded with identity factors.
inline ArConfig parse_ar_config(const Json& j) {
  if (!j.is_object()) throw UsageError("AR config must be a JSON object");
  std::vector<Length3Filter> f, g;
  ArConfig cfg;
  auto read_axis = [](const Json& list, bool reparam, const std::string& key) {
    if (!list.is_array()) throw UsageError("AR config '" + key + "' must be an array of factors");
    std::vector<Length3Filter> out;
    for (const auto& item : list) {
      if (!item.is_array() || !std::all_of(item.begin(), item.end(), [](const Json& v) { return v.is_number(); }))
        throw UsageError("AR config '" + key + "' entries must be numeric arrays");
      const auto v = item.get<std::vector<double>>();
      if (reparam) {
        if (v.size() != 2 && v.size() != 3) throw UsageError("'" + key + "' entries are [alpha, beta] or [alpha, beta, f0]");
        out.push_back(materialize(ReparamFilter{v[0], v[1], v.size() == 3 ? v[2] : 1.0}));
      } else {
        if (v.size() != 3) throw UsageError("'" + key + "' entries are [fm1, f0, fp1]");
        out.push_back({v[0], v[1], v[2]});
      }
    }
    return out;
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "f" || key == "f_reparam") {
      if (!f.empty()) throw UsageError("AR config sets the horizontal cascade twice");
      f = read_axis(value, key == "f_reparam", key);
    } else if (key == "g" || key == "g_reparam") {
      if (!g.empty()) throw UsageError("AR config sets the vertical cascade twice");
      g = read_axis(value, key == "g_reparam", key);
    } else if (key == "epsilon") {
      if (!value.is_number() || value.get<double>() < 0.0) throw UsageError("AR config epsilon must be a number >= 0");
      cfg.epsilon = value.get<double>();
    } else {
      throw UsageError("unknown AR config key '" + key + "'");
    }
  }
  const std::size_t depth = std::max<std::size_t>({f.size(), g.size(), 1});
  cfg.kernel = SeparableArKernel(1, depth);
  for (std::size_t q = 0; q < f.size(); ++q) cfg.kernel.horizontal(0, q) = f[q];
  for (std::size_t q = 0; q < g.size(); ++q) cfg.kernel.vertical(0, q) = g[q];
  for (const auto& factor : cfg.kernel.horizontal_storage())
    require(factor.f0 > 0.0, "AR factor center taps must be positive");
  for (const auto& factor : cfg.kernel.vertical_storage())
    require(factor.f0 > 0.0, "AR factor center taps must be positive");
  return cfg;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline int cmd_solve(const SolveOptions& o, std::ostream& out, std::ostream& err) {
  if (o.input.empty()) throw UsageError("solve needs --input");
  const FieldTensor x = read_field(o.input);
  const MaKernel ma = MaKernel::from_taps(o.ma_kernel.empty() ? Kernel2D::delta() : read_kernel(o.ma_kernel), o.dilation);
  const ArConfig ar = o.ar_config.empty() ? ArConfig{} : parse_ar_config(read_json_file(o.ar_config));
  if (o.oracle && x.size() > kDenseSolveLimit)
    throw UsageError("--oracle limited to fields with at most " + std::to_string(kDenseSolveLimit) + " pixels");

  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const FieldTensor t = ma_forward(x, ma);
  const auto t1 = Clock::now();
  const FieldTensor y = ar_solve(t, ar.kernel, ar.epsilon);
  const auto t2 = Clock::now();

  Json report{{"height", x.height()},
              {"width", x.width()},
              {"ma_seconds", std::chrono::duration<double>(t1 - t0).count()},
              {"ar_seconds", std::chrono::duration<double>(t2 - t1).count()}};
  int code = kSuccess;
  if (o.oracle) {
    const double deviation = max_abs_diff(y, ar_forward_dense(t, ar.kernel));
    report["oracle_max_abs_deviation"] = deviation;
    if (!(deviation <= o.oracle_tol)) {
      err << "solve: FFT and dense solutions differ by " << format_double(deviation) << '\n';
      code = kNumericFailure;
    }
  }
  const bool to_file = !o.out.empty();
  if (to_file) {
    std::ofstream file = open_output(o.out);
    write_field(file, y);
  } else {
    write_field(out, y);
  }
  emit_summary(report, to_file, out, err);
  return code;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string mode = "reparam";
  std::size_t steps = 500;
  double lr = 1e-2;
  double clip = 3.0;
  std::uint64_t seed = 1;
  std::size_t grid = 64;
  std::size_t samples = 4;
  double sigma = 4.0;
  std::string channels = "1,4,1";
  std::size_t depth = 1;
  double raw_init = 0.55;
  std::string out;
  std::string histogram;
};

inline int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  TrainConfig config;
  if (o.mode == "reparam") {
    config.mode = TrainMode::Reparam;
  } else if (o.mode == "raw") {
    config.mode = TrainMode::Raw;
  } else {
    throw UsageError("--mode must be reparam or raw");
  }
  config.channels.clear();
  for (const auto& c : split(o.channels, ',')) {
    const int v = parse_int(c, "--channels");
    require(v >= 1, "--channels entries must be positive");
    config.channels.push_back(static_cast<std::size_t>(v));
  }
  require(config.channels.front() == 1 && config.channels.back() == 1,
          "the toy task maps one channel to one channel; --channels must start and end with 1");
  config.steps = o.steps;
  config.learning_rate = o.lr;
  config.clip = o.clip;
  config.seed = o.seed + 1;
  config.depth = o.depth;
  config.raw_init_tap = o.raw_init;
  config.validate();
  if (!o.histogram.empty() && config.mode != TrainMode::Reparam)
    throw UsageError("--histogram needs --mode reparam");

  const ToyTask task = ToyTask::make(o.samples, o.grid, o.sigma, o.seed);
  const TrainResult result = train(task, config);

  const bool to_file = !o.out.empty();
  std::ofstream file;
  if (to_file) file = open_output(o.out);
  std::ostream& data = to_file ? static_cast<std::ostream&>(file) : out;
  data << "step,loss,max_abs_output,mean_abs_ar_sum\n";
  for (const auto& row : result.trace)
    data << row.step << ',' << format_double(row.loss) << ',' << format_double(row.max_abs_output) << ','
         << format_double(row.mean_abs_ar_sum()) << '\n';

  if (!o.histogram.empty()) {
    const CoefficientHistogram h = learned_coefficient_summary(result.network);
    std::ofstream hist = open_output(o.histogram);
    hist << "bin_center,count\n";
    for (std::size_t b = 0; b < kCoefficientBins; ++b)
      hist << format_double(CoefficientHistogram::bin_center(b)) << ',' << h.counts[b] << '\n';
  }

  Json summary{{"mode", o.mode},
               {"initial_loss", result.trace.front().loss},
               {"final_loss", result.trace.back().loss},
               {"steps_completed", result.trace.back().step},
               {"diverged", result.diverged()}};
  if (result.diverged()) summary["divergence_step"] = *result.divergence_step;
  emit_summary(summary, to_file, out, err);
  if (result.diverged()) {
    err << "train: diverged at step " << *result.divergence_step << '\n';
    return kDiverged;
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

namespace detail {

// Converts the entries of a JSON config object into flag tokens for `sub`.
inline std::vector<std::string> config_tokens(const CLI::App& sub, const std::string& path) {
  const Json j = read_json_file(path);
  if (!j.is_object()) throw UsageError("config '" + path + "' must be a JSON object");
  std::vector<std::string> tokens;
  for (const auto& [key, value] : j.items()) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    const CLI::Option* opt = sub.get_option_no_throw("--" + name);
    if (opt == nullptr || name == "config" || name == "help")
      throw UsageError("unknown config key '" + key + "' for " + sub.get_name());
    const std::string flag = "--" + name;
    auto scalar = [&key](const Json& v) -> std::string {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number_integer()) return std::to_string(v.get<long long>());
      if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
      if (v.is_number_float()) return format_double(v.get<double>());
      throw UsageError("config key '" + key + "' has an unsupported value");
    };
    if (value.is_boolean()) {
      if (opt->get_type_size() != 0) throw UsageError("config key '" + key + "' expects a value, not a boolean");
      if (value.get<bool>()) tokens.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& item : value) joined += (joined.empty() ? "" : ",") + scalar(item);
      tokens.insert(tokens.end(), {flag, joined});
    } else {
      tokens.insert(tokens.end(), {flag, scalar(value)});
    }
  }
  return tokens;
}

}  // namespace detail

/// Runs one invocation; `args` excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ARMA layer toolkit: effective receptive fields, gradient checks, stability audits, solves, training"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  std::string config_path;

  ErfOptions erf;
  CLI::App* erf_cmd = app.add_subcommand("erf", "Effective receptive field of a linear ARMA network");
  erf_cmd->add_option("--layers", erf.layers, "Layer list \"K,d,a;K,d,a;...\"");
  erf_cmd->add_option("--mode", erf.mode, "analytic | empirical-1d | empirical-2d")->capture_default_str();
  erf_cmd->add_option("--grid", erf.grid, "Side of the 2D grid")->capture_default_str();
  erf_cmd->add_option("--channels", erf.channels, "Channels per 2D layer")->capture_default_str();
  erf_cmd->add_option("--seed", erf.seed, "Seed for Xavier kernels")->capture_default_str();
  erf_cmd->add_option("--init", erf.init, "2D MA kernels: uniform | xavier")->capture_default_str();
  erf_cmd->add_option("--epsilon", erf.epsilon, "Truncation of the geometric inverse")->capture_default_str();
  erf_cmd->add_option("--out", erf.out, "Output CSV path (default stdout)");

  GradcheckOptions gc;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients of one ARMA layer");
  gc_cmd->add_option("--size", gc.size, "Field side I")->capture_default_str();
  gc_cmd->add_option("--channels", gc.channels, "Input and output channels S,T")->capture_default_str();
  gc_cmd->add_option("--q", gc.q, "AR cascade depth Q")->capture_default_str();
  gc_cmd->add_option("--taps", gc.taps, "MA tap count K")->capture_default_str();
  gc_cmd->add_option("--seed", gc.seed, "Random instance seed")->capture_default_str();
  gc_cmd->add_option("--tol", gc.tol, "Relative error tolerance")->capture_default_str();
  gc_cmd->add_option("--step", gc.h, "Finite-difference step")->capture_default_str();

  StabilityOptions st;
  CLI::App* st_cmd = app.add_subcommand("stability", "Stability and zeros of length-3 AR factors");
  st_cmd->add_option("--filter", st.filter, "Raw factor fm1,f0,fp1");
  st_cmd->add_option("--reparam", st.reparam, "Reparameterized factor alpha,beta[,f0]");
  st_cmd->add_option("--scan", st.scan, "Number of random (alpha, beta) samples to audit");
  st_cmd->add_option("--seed", st.seed, "Scan seed")->capture_default_str();
  st_cmd->add_option("--range", st.range, "Scan samples alpha, beta in [-range, range]")->capture_default_str();

  SolveOptions so;
  CLI::App* so_cmd = app.add_subcommand("solve", "Apply one single-channel ARMA layer to a field");
  so_cmd->add_option("--input", so.input, "Input field CSV");
  so_cmd->add_option("--ma-kernel", so.ma_kernel, "MA kernel CSV with odd dimensions (default identity)");
  so_cmd->add_option("--dilation", so.dilation, "MA dilation")->capture_default_str();
  so_cmd->add_option("--ar-config", so.ar_config, "AR cascade JSON (default identity)");
  so_cmd->add_option("--out", so.out, "Output field CSV (default stdout)");
  so_cmd->add_flag("--oracle", so.oracle, "Compare against the dense solve");
  so_cmd->add_option("--oracle-tol", so.oracle_tol, "Allowed dense/FFT deviation")->capture_default_str();

  TrainOptions tr;
  CLI::App* tr_cmd = app.add_subcommand("train", "Toy wide-blur regression with stacked ARMA layers");
  tr_cmd->add_option("--mode", tr.mode, "reparam | raw")->capture_default_str();
  tr_cmd->add_option("--steps", tr.steps, "SGD steps")->capture_default_str();
  tr_cmd->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  tr_cmd->add_option("--clip", tr.clip, "Global gradient-norm clip")->capture_default_str();
  tr_cmd->add_option("--seed", tr.seed, "Task seed; the network uses seed + 1")->capture_default_str();
  tr_cmd->add_option("--grid", tr.grid, "Field side")->capture_default_str();
  tr_cmd->add_option("--samples", tr.samples, "Training fields")->capture_default_str();
  tr_cmd->add_option("--sigma", tr.sigma, "Target blur width (0 = identity target)")->capture_default_str();
  tr_cmd->add_option("--channels", tr.channels, "Channel sizes of the layer stack")->capture_default_str();
  tr_cmd->add_option("--depth", tr.depth, "AR cascade depth Q")->capture_default_str();
  tr_cmd->add_option("--raw-init", tr.raw_init, "Raw mode initial fm1 = fp1")->capture_default_str();
  tr_cmd->add_option("--out", tr.out, "Trace CSV (default stdout)");
  tr_cmd->add_option("--histogram", tr.histogram, "Write the learned tanh(beta) histogram CSV here");

  for (CLI::App* sub : {erf_cmd, gc_cmd, st_cmd, so_cmd, tr_cmd})
    sub->add_option("--config", config_path, "JSON file mirroring these flags; flags take precedence");

  try {
    // Splice config-file entries in front of the explicit flags so the flags win.
    if (!args.empty() && args[0].rfind('-', 0) != 0) {
      CLI::App* sub = app.get_subcommand_no_throw(args[0]);
      for (std::size_t i = 1; sub != nullptr && i < args.size(); ++i) {
        std::string path;
        std::size_t width = 0;
        if (args[i] == "--config" && i + 1 < args.size()) {
          path = args[i + 1];
          width = 2;
        } else if (args[i].rfind("--config=", 0) == 0) {
          path = args[i].substr(9);
          width = 1;
        }
        if (width == 0) continue;
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + width));
        const auto tokens = detail::config_tokens(*sub, path);
        args.insert(args.begin() + 1, tokens.begin(), tokens.end());
        break;
      }
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);

    if (erf_cmd->parsed()) return cmd_erf(erf, out, err);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc, out, err);
    if (st_cmd->parsed()) return cmd_stability(st, out, err);
    if (so_cmd->parsed()) return cmd_solve(so, out, err);
    if (tr_cmd->parsed()) return cmd_train(tr, out, err);
    return kUsage;
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kSuccess : kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const std::ios_base::failure& e) {
    err << "I/O error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace armanet::cli
