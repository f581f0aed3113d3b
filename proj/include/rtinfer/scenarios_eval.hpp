#pragma once

// Ground-truth R_t scenarios, error and calibration metrics, and the
// end-to-end benchmark (scenario -> infections -> observations -> methods).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "rtinfer/baseline_cori.hpp"
#include "rtinfer/disease_model.hpp"
#include "rtinfer/error.hpp"
#include "rtinfer/observation.hpp"
#include "rtinfer/parallel.hpp"
#include "rtinfer/random.hpp"
#include "rtinfer/svi_engine.hpp"
#include "rtinfer/test_profile.hpp"

namespace rtinfer {

enum class ScenarioKind { kOutbreak, kRandomTrend };

inline ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "outbreak") return ScenarioKind::kOutbreak;
  if (s == "random_trend") return ScenarioKind::kRandomTrend;
  throw ConfigError("unknown scenario '" + s + "' (expected outbreak or random_trend)", "scenario.kind");
}

inline std::string to_string(ScenarioKind k) { return k == ScenarioKind::kOutbreak ? "outbreak" : "random_trend"; }

struct OutbreakParams {
  double r_low_min = 0.6, r_low_max = 0.9;
  double r_high_min = 1.3, r_high_max = 1.8;
  double changepoint_min_fraction = 0.3, changepoint_max_fraction = 0.7;
  /// Days for the logistic rise to go from 10% to 90% of its height.
  double transition_width = 7.0;
};

struct TrendParams {
  int min_changes = 2, max_changes = 4;
  double max_slope = 0.04;
  double start_min = 0.7, start_max = 1.3;
  double r_min = 0.05, r_max = 3.0;
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::kOutbreak;
  int horizon = 100;
  std::uint64_t rng_seed = 1;
  double importation_rate = 0.5;
  OutbreakParams outbreak;
  TrendParams trend;

  void validate() const {
    if (horizon < 2) throw ConfigError("must be at least 2", "scenario.horizon");
    if (!(importation_rate >= 0.0)) throw ConfigError("must be non-negative", "scenario.importation_rate");
    const auto& o = outbreak;
    if (!(0.0 <= o.r_low_min && o.r_low_min <= o.r_low_max && o.r_low_max < 1.0))
      throw ConfigError("need 0 <= r_low_min <= r_low_max < 1", "scenario.outbreak");
    if (!(1.0 < o.r_high_min && o.r_high_min <= o.r_high_max))
      throw ConfigError("need 1 < r_high_min <= r_high_max", "scenario.outbreak");
    if (!(0.0 <= o.changepoint_min_fraction && o.changepoint_min_fraction <= o.changepoint_max_fraction &&
          o.changepoint_max_fraction <= 1.0))
      throw ConfigError("changepoint fractions must satisfy 0 <= min <= max <= 1", "scenario.outbreak");
    if (!(o.transition_width > 0.0)) throw ConfigError("must be positive", "scenario.outbreak.transition_width");
    const auto& r = trend;
    if (r.min_changes < 0 || r.min_changes > r.max_changes || r.max_changes > horizon - 2)
      throw ConfigError("need 0 <= min_changes <= max_changes <= horizon - 2", "scenario.trend");
    if (!(r.max_slope >= 0.0)) throw ConfigError("must be non-negative", "scenario.trend.max_slope");
    if (!(0.0 <= r.r_min && r.r_min <= r.start_min && r.start_min <= r.start_max && r.start_max <= r.r_max))
      throw ConfigError("need 0 <= r_min <= start_min <= start_max <= r_max", "scenario.trend");
  }
};

struct Scenario {
  RtTrajectory truth;
  int changepoint = 0;          // outbreak only
  std::vector<int> change_days;  // random trend only
};

/// Outbreak: logistic rise from R_low (day 1) to R_high (day T) centred on a
/// uniformly drawn changepoint. Random trend: piecewise-linear with random
/// change days and slopes, clamped to [r_min, r_max].
inline Scenario generate_scenario(const ScenarioConfig& config) {
  config.validate();
  Rng rng = make_stream(config.rng_seed, 0x5ce4a210);
  const int T = config.horizon;
  Scenario sc;
  sc.truth.gamma = config.importation_rate;
  sc.truth.R.resize(static_cast<std::size_t>(T));
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  if (config.kind == ScenarioKind::kOutbreak) {
    const auto& o = config.outbreak;
    const double low = uniform(o.r_low_min, o.r_low_max);
    const double high = uniform(o.r_high_min, o.r_high_max);
    const int first = static_cast<int>(std::ceil(o.changepoint_min_fraction * T));
    const int last = std::max(first, static_cast<int>(std::floor(o.changepoint_max_fraction * T)));
    sc.changepoint = std::uniform_int_distribution<int>(first, last)(rng);
    const double scale = o.transition_width / (2.0 * std::log(9.0));
    auto logistic = [&](int t) { return 1.0 / (1.0 + std::exp(-(t - sc.changepoint) / scale)); };
    const double lo = logistic(1), hi = logistic(T);
    for (int t = 1; t <= T; ++t) sc.truth.R[t - 1] = low + (high - low) * (logistic(t) - lo) / (hi - lo);
  } else {
    const auto& r = config.trend;
    const int changes = std::uniform_int_distribution<int>(r.min_changes, r.max_changes)(rng);
    std::vector<int> days(static_cast<std::size_t>(T - 2));
    std::iota(days.begin(), days.end(), 2);
    std::sample(days.begin(), days.end(), std::back_inserter(sc.change_days), changes, rng);
    double value = uniform(r.start_min, r.start_max);
    double slope = uniform(-r.max_slope, r.max_slope);
    std::size_t next_change = 0;
    for (int t = 1; t <= T; ++t) {
      if (next_change < sc.change_days.size() && sc.change_days[next_change] == t) {
        slope = uniform(-r.max_slope, r.max_slope);
        ++next_change;
      }
      if (t > 1) value = std::clamp(value + slope, r.r_min, r.r_max);
      sc.truth.R[t - 1] = value;
    }
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Metrics

/// Per-day posterior in the method's native family.
struct DayPosterior {
  enum class Family { kNone, kNormal, kGamma };
  Family family = Family::kNone;
  double a = 0.0;  // normal: mean, gamma: shape
  double b = 0.0;  // normal: sd,   gamma: scale

  static DayPosterior normal(double mean, double sd) { return {Family::kNormal, mean, sd}; }
  static DayPosterior gamma(double shape, double scale) { return {Family::kGamma, shape, scale}; }

  bool has_estimate() const { return family != Family::kNone; }
  double mean() const { return family == Family::kGamma ? a * b : a; }

  double quantile(double p) const {
    if (family == Family::kGamma)
      return boost::math::quantile(boost::math::gamma_distribution<double>(a, b), p);
    if (b <= 0.0) return a;
    return boost::math::quantile(boost::math::normal_distribution<double>(a, b), p);
  }

  Interval interval(double level) const {
    if (level <= 0.0) return {mean(), mean()};
    if (level >= 1.0)
      return {family == Family::kGamma ? 0.0 : -std::numeric_limits<double>::infinity(),
              std::numeric_limits<double>::infinity()};
    return {quantile(0.5 - 0.5 * level), quantile(0.5 + 0.5 * level)};
  }
};

using MethodPosterior = std::vector<DayPosterior>;

inline MethodPosterior posterior_from_summary(const PosteriorSummary& s) {
  MethodPosterior out;
  for (int t = 0; t < s.horizon(); ++t)
    out.push_back(DayPosterior::normal(s.mean_R[static_cast<std::size_t>(t)], s.sd_R[static_cast<std::size_t>(t)]));
  return out;
}

inline MethodPosterior posterior_from_cori(const std::vector<GammaPosterior>& days) {
  MethodPosterior out;
  for (const auto& d : days) out.push_back(d.has_estimate ? DayPosterior::gamma(d.shape, d.scale) : DayPosterior{});
  return out;
}

inline std::vector<bool> estimate_mask(const MethodPosterior& p) {
  std::vector<bool> mask;
  for (const auto& d : p) mask.push_back(d.has_estimate());
  return mask;
}

inline std::vector<double> posterior_means(const MethodPosterior& p) {
  std::vector<double> out;
  for (const auto& d : p) out.push_back(d.has_estimate() ? d.mean() : std::numeric_limits<double>::quiet_NaN());
  return out;
}

/// Mean absolute error over days where `valid` is set; nullopt when no day
/// is valid.
inline std::optional<double> mae(std::span<const double> estimate, std::span<const double> truth,
                                 const std::vector<bool>& valid) {
  if (estimate.size() != truth.size() || valid.size() != truth.size())
    throw ConfigError("estimate, truth and mask lengths differ", "mae");
  double total = 0.0;
  long count = 0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (!valid[t]) continue;
    total += std::abs(estimate[t] - truth[t]);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return total / double(count);
}

/// Fraction of (instance, day) pairs, over days with an estimate, whose truth
/// falls in the central credible interval at each level.
inline std::vector<double> calibration_curve(const std::vector<MethodPosterior>& posteriors,
                                             const std::vector<std::vector<double>>& truths,
                                             const std::vector<double>& levels) {
  if (posteriors.size() != truths.size() || posteriors.empty())
    throw ConfigError("need one truth per posterior and at least one instance", "calibration");
  std::vector<double> coverage;
  for (double level : levels) {
    long covered = 0, total = 0;
    for (std::size_t i = 0; i < posteriors.size(); ++i) {
      for (std::size_t t = 0; t < truths[i].size(); ++t) {
        const auto& d = posteriors[i][t];
        if (!d.has_estimate()) continue;
        ++total;
        if (d.interval(level).contains(truths[i][t])) ++covered;
      }
    }
    coverage.push_back(total == 0 ? std::numeric_limits<double>::quiet_NaN() : double(covered) / double(total));
  }
  return coverage;
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchmarkCell {
  ScenarioKind scenario = ScenarioKind::kOutbreak;
  std::string test = "pcr";
  std::string scheme = "cross_sectional";
  /// uniform: p_test; cross-sectional: fraction of N tested per day;
  /// longitudinal: fraction of N enrolled across all cohorts.
  double sample_fraction = 0.001;

  std::string label() const {
    return to_string(scenario) + "/" + test + "/" + scheme + "/" + std::to_string(sample_fraction);
  }
};

struct BenchmarkGrid {
  std::vector<BenchmarkCell> cells;
  std::vector<std::string> methods{"gprt", "cori"};
  int instances = 20;
  std::uint64_t seed = 1;
  DiseaseConfig disease;
  ScenarioConfig scenario;
  GpKernelConfig kernel;
  SviConfig svi;
  CoriConfig cori;
  LikelihoodOptions likelihood;
  int cadence = 14;
  DiscretePmf uniform_delay = DiscretePmf::point(2);
  std::vector<double> calibration_levels{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95};

  void validate() const {
    if (cells.empty()) throw ConfigError("must list at least one cell", "cells");
    if (instances < 1) throw ConfigError("must be positive", "instances");
    for (const auto& m : methods)
      if (m != "gprt" && m != "cori" && m != "truth")
        throw ConfigError("unknown method '" + m + "' (expected gprt, cori or truth)", "methods");
    disease.validate();
    svi.validate();
    cori.validate();
    kernel.validate();
  }
};

inline ObservationScheme make_scheme(const std::string& kind, double fraction, const DiseaseConfig& disease,
                                     int cadence, const DiscretePmf& uniform_delay) {
  const int N = disease.population_size;
  if (kind == "uniform") return {UniformUndersampling{fraction, uniform_delay}};
  if (kind == "cross_sectional") {
    const int s = static_cast<int>(std::lround(fraction * N));
    return {CrossSectional{std::vector<int>(static_cast<std::size_t>(disease.horizon), s)}};
  }
  if (kind == "longitudinal") {
    const int total = static_cast<int>(std::lround(fraction * N));
    Longitudinal l{std::vector<int>(static_cast<std::size_t>(cadence), total / cadence), cadence};
    for (int c = 0; c < total % cadence; ++c) ++l.cohort_sizes[static_cast<std::size_t>(c)];
    return {l};
  }
  throw ConfigError("unknown scheme '" + kind + "' (expected uniform, cross_sectional or longitudinal)", "scheme");
}

struct MethodOutcome {
  std::string method;
  MethodPosterior posterior;
  std::optional<double> mae;
  bool failed = false;
  std::string error;
};

struct InstanceResult {
  int instance = 0;
  std::vector<double> truth;
  InfectionSeries infections;
  ObservationSeries observations;
  std::vector<MethodOutcome> methods;
};

struct MethodAggregate {
  std::string method;
  double mean_mae = std::numeric_limits<double>::quiet_NaN();
  double sd_mae = std::numeric_limits<double>::quiet_NaN();
  int evaluated = 0;
  int failures = 0;
  bool flagged = false;  // more than 10% of instances failed
  std::vector<double> coverage;
};

struct CellResult {
  BenchmarkCell cell;
  std::vector<InstanceResult> instances;
  std::vector<MethodAggregate> aggregates;
};

struct BenchmarkResult {
  std::vector<double> levels;
  std::vector<CellResult> cells;
};

inline InstanceResult run_instance(const BenchmarkGrid& grid, std::size_t cell_index, int instance) {
  const auto& cell = grid.cells[cell_index];
  Rng seeds = make_stream(grid.seed, cell_index, static_cast<std::uint64_t>(instance), 0xbe4c);
  ScenarioConfig sc_config = grid.scenario;
  sc_config.kind = cell.scenario;
  sc_config.horizon = grid.disease.horizon;
  sc_config.rng_seed = seeds();
  const auto scenario = generate_scenario(sc_config);
  Rng sim_rng = make_stream(seeds());
  const auto n = simulate(scenario.truth, grid.disease, sim_rng);
  const auto profile = builtin_profile(cell.test);
  const auto scheme = make_scheme(cell.scheme, cell.sample_fraction, grid.disease, grid.cadence, grid.uniform_delay);
  Rng obs_rng = make_stream(seeds());
  const auto x = sample_observations(n, grid.disease, scheme, profile, obs_rng);
  const std::uint64_t fit_seed = seeds();

  InstanceResult r{instance, scenario.truth.R, n, x, {}};
  for (const auto& method : grid.methods) {
    MethodOutcome out{method, {}, std::nullopt, false, {}};
    try {
      if (method == "gprt") {
        InferenceModel model(grid.disease, profile, scheme, grid.kernel, grid.likelihood);
        SviConfig svi = grid.svi;
        svi.rng_seed = fit_seed;
        out.posterior = posterior_from_summary(fit(x, model, svi).summary);
      } else if (method == "cori") {
        CoriConfig cori = grid.cori;
        cori.mean_delay_shift = mean_observation_delay(scheme, profile);
        out.posterior = posterior_from_cori(cori_posterior(x, grid.disease.profile, cori));
      } else {
        for (double v : r.truth) out.posterior.push_back(DayPosterior::normal(v, 0.0));
      }
      const auto means = posterior_means(out.posterior);
      out.mae = mae(means, r.truth, estimate_mask(out.posterior));
    } catch (const std::exception& e) {
      out.failed = true;
      out.error = e.what();
      out.posterior.assign(r.truth.size(), DayPosterior{});
    }
    r.methods.push_back(std::move(out));
  }
  return r;
}

inline MethodAggregate aggregate_method(const std::vector<InstanceResult>& instances, std::size_t m,
                                        const std::vector<double>& levels) {
  MethodAggregate agg;
  agg.method = instances.front().methods[m].method;
  std::vector<double> maes;
  std::vector<MethodPosterior> posteriors;
  std::vector<std::vector<double>> truths;
  for (const auto& inst : instances) {
    const auto& out = inst.methods[m];
    if (out.failed) ++agg.failures;
    if (out.mae) maes.push_back(*out.mae);
    posteriors.push_back(out.posterior);
    truths.push_back(inst.truth);
  }
  agg.evaluated = static_cast<int>(maes.size());
  agg.flagged = agg.failures * 10 > static_cast<int>(instances.size());
  if (!maes.empty()) {
    agg.mean_mae = std::accumulate(maes.begin(), maes.end(), 0.0) / double(maes.size());
    double ss = 0.0;
    for (double v : maes) ss += (v - agg.mean_mae) * (v - agg.mean_mae);
    agg.sd_mae = maes.size() > 1 ? std::sqrt(ss / double(maes.size() - 1)) : 0.0;
  }
  agg.coverage = calibration_curve(posteriors, truths, levels);
  return agg;
}

/// Runs every cell of the grid; instances run in parallel, each with streams
/// derived from (seed, cell, instance), so results do not depend on `threads`.
inline BenchmarkResult run_benchmark(const BenchmarkGrid& grid, int threads = 1,
                                     const std::function<void(const std::string&)>& progress = {}) {
  grid.validate();
  BenchmarkResult result{grid.calibration_levels, {}};
  for (std::size_t c = 0; c < grid.cells.size(); ++c) {
    CellResult cell{grid.cells[c], std::vector<InstanceResult>(static_cast<std::size_t>(grid.instances)), {}};
    parallel_for(cell.instances.size(), threads, [&](std::size_t i) {
      cell.instances[i] = run_instance(grid, c, static_cast<int>(i));
      if (progress) progress(cell.cell.label() + " instance " + std::to_string(i));
    });
    for (std::size_t m = 0; m < grid.methods.size(); ++m)
      cell.aggregates.push_back(aggregate_method(cell.instances, m, grid.calibration_levels));
    result.cells.push_back(std::move(cell));
  }
  return result;
}

}  // namespace rtinfer
