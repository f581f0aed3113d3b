#pragma once

// Observation models: how daily positive-test counts x arise from the
// infection series n, and single-draw lower-bound estimators of log p(x | n)
// obtained by sampling the latent test-timing variables.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rtinfer/disease_model.hpp"
#include "rtinfer/error.hpp"
#include "rtinfer/random.hpp"
#include "rtinfer/test_profile.hpp"

namespace rtinfer {

/// Each converting infection is tested with probability p_test, `delay` days
/// after conversion.
struct UniformUndersampling {
  double p_test = 0.1;
  DiscretePmf delay = DiscretePmf::point(2);
};

/// A fresh uniform sample of sample_sizes[t-1] people is tested on day t.
struct CrossSectional {
  std::vector<int> sample_sizes;
};

/// One uniform sample split into `cadence` cohorts; cohort c (0-based) is
/// tested on days c+1, c+1+d, c+1+2d, ... and each member's first positive
/// is reported.
struct Longitudinal {
  std::vector<int> cohort_sizes;
  int cadence = 14;

  int cohort_of(int day) const { return (day - 1) % cadence; }
  int tested_on(int day) const { return cohort_sizes[static_cast<std::size_t>(cohort_of(day))]; }
};

struct ObservationScheme {
  std::variant<UniformUndersampling, CrossSectional, Longitudinal> kind;
  /// Probability that a tested, currently non-positive person reports
  /// positive. Cross-sectional only.
  double false_positive_rate = 0.0;

  std::string name() const {
    return std::visit(
        [](const auto& k) -> std::string {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, UniformUndersampling>) return "uniform";
          else if constexpr (std::is_same_v<K, CrossSectional>) return "cross_sectional";
          else return "longitudinal";
        },
        kind);
  }

  void validate(const DiseaseConfig& config) const {
    const int N = config.population_size;
    const auto T = static_cast<std::size_t>(config.horizon);
    if (!(false_positive_rate >= 0.0 && false_positive_rate < 1.0))
      throw ConfigError("must lie in [0, 1)", "observation.false_positive_rate");
    if (false_positive_rate > 0.0 && !std::holds_alternative<CrossSectional>(kind))
      throw ConfigError("false positives are only modeled for cross-sectional testing",
                        "observation.false_positive_rate");
    if (const auto* u = std::get_if<UniformUndersampling>(&kind)) {
      if (!(u->p_test > 0.0 && u->p_test <= 1.0)) throw ConfigError("must lie in (0, 1]", "observation.p_test");
      if (u->delay.empty()) throw ConfigError("must not be empty", "observation.delay_pmf");
      for (const auto& [days, p] : u->delay.entries())
        if (days < 0) throw ConfigError("delays must be non-negative", "observation.delay_pmf");
    } else if (const auto* c = std::get_if<CrossSectional>(&kind)) {
      if (c->sample_sizes.size() != T)
        throw ConfigError("needs one entry per day of the horizon", "observation.sample_sizes");
      for (int s : c->sample_sizes)
        if (s < 0 || s > N) throw ConfigError("entries must lie in [0, N]", "observation.sample_sizes");
    } else {
      const auto& l = std::get<Longitudinal>(kind);
      if (l.cadence < 1) throw ConfigError("must be at least 1", "observation.cadence");
      if (l.cohort_sizes.size() != static_cast<std::size_t>(l.cadence))
        throw ConfigError("needs one entry per cohort (cadence entries)", "observation.sample_sizes");
      long total = 0;
      for (int s : l.cohort_sizes) {
        if (s < 0) throw ConfigError("entries must be non-negative", "observation.sample_sizes");
        total += s;
      }
      if (total > N) throw ConfigError("cohorts exceed the population", "observation.sample_sizes");
    }
  }
};

using ObservationSeries = std::vector<int>;

struct LikelihoodOptions {
  /// Per-day lower clamp on log-likelihood terms; -infinity disables it.
  double floor = -50.0;

  static LikelihoodOptions unfloored() { return {-std::numeric_limits<double>::infinity()}; }
  double clamp(double term) const { return std::max(term, floor); }
};

inline double log_binomial_pmf(long k, long n, double p) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (k < 0 || k > n) return kNegInf;
  if (p <= 0.0) return k == 0 ? 0.0 : kNegInf;
  if (p >= 1.0) return k == n ? 0.0 : kNegInf;
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
         k * std::log(p) + (n - k) * std::log1p(-p);
}

/// Infection day of every infected individual: seeds on day 0 first, then in
/// day order.
inline std::vector<int> infection_days(std::span<const int> n, const DiseaseConfig& config) {
  std::vector<int> days(static_cast<std::size_t>(config.initial_infected), 0);
  for (std::size_t t = 0; t < n.size(); ++t) days.insert(days.end(), static_cast<std::size_t>(n[t]), int(t) + 1);
  return days;
}

inline std::vector<ConversionRecord> sample_records(std::span<const int> n, const DiseaseConfig& config,
                                                    const TestProfile& profile, Rng& rng) {
  std::vector<ConversionRecord> records;
  records.reserve(static_cast<std::size_t>(config.initial_infected) +
                  static_cast<std::size_t>(std::accumulate(n.begin(), n.end(), 0L)));
  for (int day : infection_days(n, config)) records.push_back(profile.sample_conversion(day, rng));
  return records;
}

/// Number of individuals positive on each day 1..T (t_convert <= t < t_revert).
inline std::vector<long> prevalence_counts(std::span<const ConversionRecord> records, int horizon) {
  std::vector<long> diff(static_cast<std::size_t>(horizon) + 2, 0);
  auto clip = [&](int day) { return std::clamp(day, 1, horizon + 1); };
  for (const auto& r : records) {
    if (!r.converts() || r.t_convert > horizon) continue;
    ++diff[clip(r.t_convert)];
    if (r.t_revert != kNever) --diff[clip(r.t_revert)];
  }
  std::vector<long> prevalence(static_cast<std::size_t>(horizon));
  long running = 0;
  for (int t = 1; t <= horizon; ++t) prevalence[t - 1] = running += diff[t];
  return prevalence;
}

// ---------------------------------------------------------------------------
// Uniform undersampling

/// Sum over days of log Binomial(x_t; count_t, p_test), where count_t is the
/// number of individuals whose test day (conversion + delay) is t.
inline double loglik_uniform_counts(std::span<const int> x, std::span<const long> counts, double p_test,
                                    const LikelihoodOptions& opts, std::vector<double>* terms = nullptr) {
  double total = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double term = opts.clamp(log_binomial_pmf(x[t], counts[t], p_test));
    if (terms) terms->push_back(term);
    total += term;
  }
  return total;
}

inline double loglik_uniform(std::span<const int> x, std::span<const int> n, const DiseaseConfig& config,
                             const UniformUndersampling& scheme, const TestProfile& profile, Rng& rng,
                             const LikelihoodOptions& opts = {}, std::vector<double>* terms = nullptr) {
  const int T = config.horizon;
  std::vector<long> counts(static_cast<std::size_t>(T), 0);
  for (int day : infection_days(n, config)) {
    const auto r = profile.sample_conversion(day, rng);
    const int delay = scheme.delay.sample(rng);
    if (!r.converts()) continue;
    const long tested = static_cast<long>(r.t_convert) + delay;
    if (tested >= 1 && tested <= T) ++counts[tested - 1];
  }
  return loglik_uniform_counts(x, counts, scheme.p_test, opts, terms);
}

// ---------------------------------------------------------------------------
// Cross-sectional

inline double loglik_cross_sectional_prevalence(std::span<const int> x, std::span<const long> prevalence,
                                                int population, std::span<const int> sample_sizes,
                                                double false_positive_rate, const LikelihoodOptions& opts,
                                                std::vector<double>* terms = nullptr) {
  double total = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double prev = std::min(1.0, static_cast<double>(prevalence[t]) / population);
    const double p = prev + (1.0 - prev) * false_positive_rate;
    const double term = opts.clamp(log_binomial_pmf(x[t], sample_sizes[t], p));
    if (terms) terms->push_back(term);
    total += term;
  }
  return total;
}

inline double loglik_cross_sectional(std::span<const int> x, std::span<const int> n, const DiseaseConfig& config,
                                     const CrossSectional& scheme, const TestProfile& profile, Rng& rng,
                                     const LikelihoodOptions& opts = {}, double false_positive_rate = 0.0,
                                     std::vector<double>* terms = nullptr) {
  const auto records = sample_records(n, config, profile, rng);
  const auto prevalence = prevalence_counts(records, config.horizon);
  return loglik_cross_sectional_prevalence(x, prevalence, config.population_size, scheme.sample_sizes,
                                           false_positive_rate, opts, terms);
}

// ---------------------------------------------------------------------------
// Longitudinal

/// Counts of not-yet-detected individuals keyed by (t_convert, t_revert).
class EligibilityMatrix {
 public:
  EligibilityMatrix() = default;

  /// Individuals converting after `horizon` can never be detected and are
  /// left out.
  EligibilityMatrix(std::span<const ConversionRecord> records, int horizon) {
    for (const auto& r : records)
      if (r.converts() && r.t_convert <= horizon) add(r.t_convert, r.t_revert, 1);
  }

  void add(int t_convert, int t_revert, long count) {
    cells_[t_convert][t_revert] += count;
    total_ += count;
  }

  long total() const { return total_; }
  long count(int t_convert, int t_revert) const {
    auto row = cells_.find(t_convert);
    if (row == cells_.end()) return 0;
    auto cell = row->second.find(t_revert);
    return cell == row->second.end() ? 0 : cell->second;
  }

  /// Individuals who could first test positive on `day` under cadence d:
  /// day - d < t_convert <= day < t_revert.
  long eligible(int day, int cadence) const {
    long total = 0;
    for_each_eligible(day, cadence, [&](int, int, long c) { total += c; });
    return total;
  }

  /// Removes `k` individuals drawn uniformly without replacement from the
  /// eligible cells for `day`. Returns the number actually removed.
  long remove_uniform(long k, int day, int cadence, Rng& rng) {
    struct Cell {
      int t_convert, t_revert;
    };
    std::vector<Cell> keys;
    std::vector<long> counts;
    for_each_eligible(day, cadence, [&](int tc, int tr, long c) {
      if (c > 0) {
        keys.push_back({tc, tr});
        counts.push_back(c);
      }
    });
    long available = std::accumulate(counts.begin(), counts.end(), 0L);
    const long removals = std::min(k, available);
    for (long i = 0; i < removals; ++i) {
      const std::size_t pick = sample_weighted(rng, counts, available);
      --counts[pick];
      --available;
      auto& row = cells_[keys[pick].t_convert];
      if (--row[keys[pick].t_revert] == 0) row.erase(keys[pick].t_revert);
      if (row.empty()) cells_.erase(keys[pick].t_convert);
      --total_;
    }
    return removals;
  }

 private:
  template <class F>
  void for_each_eligible(int day, int cadence, F&& f) const {
    for (auto row = cells_.upper_bound(day - cadence); row != cells_.end() && row->first <= day; ++row)
      for (auto cell = row->second.upper_bound(day); cell != row->second.end(); ++cell)
        f(row->first, cell->first, cell->second);
  }

  std::map<int, std::map<int, long>> cells_;
  long total_ = 0;
};

/// Per-day bookkeeping of the sequential longitudinal estimator.
struct LongitudinalDay {
  long eligible = 0;        // n_conv
  long draws = 0;           // n_draws
  double probability = 0;   // n_conv / (N - earlier positives)
  double term = 0;          // floored log-likelihood contribution
  long total_before = 0;    // eligibility total before removal
  long total_after = 0;
  long removed = 0;
};

/// Sequential estimator of log p(x | t_convert, t_revert): day by day, x_t is
/// Binomial(n_draws, n_conv / (N - sum_{i<t} x_i)); the x_t detected
/// individuals are then removed uniformly from the eligible cells.
inline double loglik_longitudinal_records(std::span<const int> x, std::span<const ConversionRecord> records,
                                          int population, const Longitudinal& scheme, Rng& rng,
                                          const LikelihoodOptions& opts = {},
                                          std::vector<LongitudinalDay>* trace = nullptr,
                                          std::vector<double>* terms = nullptr) {
  const int T = static_cast<int>(x.size());
  EligibilityMatrix matrix(records, T);
  std::vector<long> found(static_cast<std::size_t>(scheme.cadence), 0);
  long detected = 0;
  double total = 0.0;
  for (int t = 1; t <= T; ++t) {
    const long xt = x[t - 1];
    const auto cohort = static_cast<std::size_t>(scheme.cohort_of(t));
    LongitudinalDay day;
    day.eligible = matrix.eligible(t, scheme.cadence);
    day.draws = std::max(0L, scheme.cohort_sizes[cohort] - found[cohort]);
    const long remaining = population - detected;
    day.probability = remaining > 0 ? std::min(1.0, double(day.eligible) / double(remaining))
                                    : (day.eligible > 0 ? 1.0 : 0.0);
    double term = log_binomial_pmf(xt, day.draws, day.probability);
    if (xt > day.eligible) term = -std::numeric_limits<double>::infinity();
    day.term = opts.clamp(term);
    total += day.term;
    if (terms) terms->push_back(day.term);
    day.total_before = matrix.total();
    day.removed = matrix.remove_uniform(xt, t, scheme.cadence, rng);
    day.total_after = matrix.total();
    found[cohort] += xt;
    detected += xt;
    if (trace) trace->push_back(day);
  }
  return total;
}

inline double loglik_longitudinal(std::span<const int> x, std::span<const int> n, const DiseaseConfig& config,
                                  const Longitudinal& scheme, const TestProfile& profile, Rng& rng,
                                  const LikelihoodOptions& opts = {}, std::vector<double>* terms = nullptr) {
  const auto records = sample_records(n, config, profile, rng);
  return loglik_longitudinal_records(x, records, config.population_size, scheme, rng, opts, nullptr, terms);
}

/// Smallest value carrying positive mass, or kNever for an empty pmf.
inline int min_support(const DiscretePmf& pmf) {
  for (const auto& [value, p] : pmf.entries())
    if (p > 0.0) return value;
  return kNever;
}

/// Fewest days between an infection and the first day whose likelihood term
/// can depend on it: the day-t term depends on infections up to day t - lag.
inline int observation_lag(const ObservationScheme& scheme, const TestProfile& profile) {
  const int convert = min_support(profile.convert_pmf());
  if (convert == kNever) return kNever;
  if (const auto* u = std::get_if<UniformUndersampling>(&scheme.kind)) {
    const int delay = min_support(u->delay);
    return delay == kNever ? kNever : std::max(0, convert + delay);
  }
  return convert;
}

/// Single-draw estimate of the lower bound E_alpha[log p(x | n, alpha)].
/// When `terms` is given, the per-day (floored) contributions are appended.
inline double loglik(std::span<const int> x, std::span<const int> n, const DiseaseConfig& config,
                     const ObservationScheme& scheme, const TestProfile& profile, Rng& rng,
                     const LikelihoodOptions& opts = {}, std::vector<double>* terms = nullptr) {
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, UniformUndersampling>)
          return loglik_uniform(x, n, config, k, profile, rng, opts, terms);
        else if constexpr (std::is_same_v<K, CrossSectional>)
          return loglik_cross_sectional(x, n, config, k, profile, rng, opts, scheme.false_positive_rate, terms);
        else
          return loglik_longitudinal(x, n, config, k, profile, rng, opts, terms);
      },
      scheme.kind);
}

// ---------------------------------------------------------------------------
// Forward sampling

/// First test day of a member of `cohort` whose record is `r`, or 0 when the
/// member never tests positive within the horizon.
inline int longitudinal_detection_day(const ConversionRecord& r, int cohort, int cadence, int horizon) {
  if (!r.converts()) return 0;
  const int first = cohort + 1;
  const int from = std::max(r.t_convert, 1);
  const int day = from <= first ? first : first + ((from - first + cadence - 1) / cadence) * cadence;
  if (day > horizon || r.t_convert <= day - cadence || r.t_revert <= day) return 0;
  return day;
}

inline ObservationSeries sample_observations(std::span<const int> n, const DiseaseConfig& config,
                                             const ObservationScheme& scheme, const TestProfile& profile,
                                             Rng& rng) {
  const int T = config.horizon;
  const int N = config.population_size;
  ObservationSeries x(static_cast<std::size_t>(T), 0);
  const auto records = sample_records(n, config, profile, rng);

  if (const auto* u = std::get_if<UniformUndersampling>(&scheme.kind)) {
    std::bernoulli_distribution tested(u->p_test);
    for (const auto& r : records) {
      if (!r.converts()) continue;
      const bool is_tested = tested(rng);
      const long day = static_cast<long>(r.t_convert) + u->delay.sample(rng);
      if (is_tested && day >= 1 && day <= T) ++x[day - 1];
    }
  } else if (const auto* c = std::get_if<CrossSectional>(&scheme.kind)) {
    const auto prevalence = prevalence_counts(records, T);
    for (int t = 1; t <= T; ++t) {
      const int s = c->sample_sizes[t - 1];
      const int positive = static_cast<int>(std::min<long>(prevalence[t - 1], N));
      int hits = sample_hypergeometric(rng, s, positive, N);
      if (scheme.false_positive_rate > 0.0)
        hits += std::binomial_distribution<int>(s - hits, scheme.false_positive_rate)(rng);
      x[t - 1] = hits;
    }
  } else {
    const auto& l = std::get<Longitudinal>(scheme.kind);
    const int sample_size = std::accumulate(l.cohort_sizes.begin(), l.cohort_sizes.end(), 0);
    // Individuals 0..records.size()-1 are the infected ones.
    std::vector<int> population(static_cast<std::size_t>(N));
    std::iota(population.begin(), population.end(), 0);
    std::vector<int> sample;
    sample.reserve(static_cast<std::size_t>(sample_size));
    std::sample(population.begin(), population.end(), std::back_inserter(sample), sample_size, rng);
    std::shuffle(sample.begin(), sample.end(), rng);
    std::size_t next = 0;
    for (int cohort = 0; cohort < l.cadence; ++cohort) {
      for (int k = 0; k < l.cohort_sizes[static_cast<std::size_t>(cohort)]; ++k) {
        const int person = sample[next++];
        if (static_cast<std::size_t>(person) >= records.size()) continue;
        const int day = longitudinal_detection_day(records[static_cast<std::size_t>(person)], cohort, l.cadence, T);
        if (day > 0) ++x[day - 1];
      }
    }
  }
  return x;
}

}  // namespace rtinfer
