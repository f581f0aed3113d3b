#pragma once

// Stochastic branching model of new infections driven by a time-varying
// reproduction number R_t and a constant importation rate gamma.
//
// Day indexing: days run 1..T and are stored at vector index t-1. Seeded
// individuals are infected on day 0.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "rtinfer/error.hpp"
#include "rtinfer/random.hpp"

namespace rtinfer {

inline constexpr double kMinRate = 1e-10;
inline constexpr double kSaturatingRate = 1e12;

/// Relative infectiousness h days after infection, h = 1..H.
class InfectiousnessProfile {
 public:
  InfectiousnessProfile() = default;

  explicit InfectiousnessProfile(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty()) throw ConfigError("profile must have at least one day", "infectiousness_weights");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w))
        throw ConfigError("weights must be finite and non-negative", "infectiousness_weights");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw ConfigError("weights must sum to 1 (got " + std::to_string(total) + ")",
                        "infectiousness_weights");
  }

  /// Gamma(mean, sd) discretized on days 1..support with day k receiving the
  /// mass of (k-1, k], renormalized.
  static InfectiousnessProfile discretized_gamma(double mean, double sd, int support) {
    const double shape = (mean / sd) * (mean / sd);
    const boost::math::gamma_distribution<double> dist(shape, sd * sd / mean);
    std::vector<double> w(static_cast<std::size_t>(support));
    for (int k = 1; k <= support; ++k)
      w[k - 1] = boost::math::cdf(dist, double(k)) - boost::math::cdf(dist, double(k - 1));
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= total;
    return InfectiousnessProfile(std::move(w));
  }

  /// Generation interval with mean 5.5 days, sd 2 days, over 14 days.
  static InfectiousnessProfile default_profile() { return discretized_gamma(5.5, 2.0, 14); }

  int support() const { return static_cast<int>(weights_.size()); }
  double weight(int h) const { return (h >= 1 && h <= support()) ? weights_[h - 1] : 0.0; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
};

struct DiseaseConfig {
  int population_size = 20000;
  int horizon = 100;
  double importation_prior_mean = 0.5;
  int initial_infected = 5;
  InfectiousnessProfile profile = InfectiousnessProfile::default_profile();

  void validate() const {
    if (population_size <= 0) throw ConfigError("must be positive", "population_size");
    if (horizon < 1) throw ConfigError("must be at least 1", "horizon");
    if (!(importation_prior_mean > 0.0)) throw ConfigError("must be positive", "importation_prior_mean");
    if (initial_infected < 0 || initial_infected > population_size)
      throw ConfigError("must lie in [0, population_size]", "initial_infected");
    if (profile.support() == 0) throw ConfigError("missing", "infectiousness_weights");
  }
};

/// R_1..R_T and the importation rate. Raw values may be negative (they come
/// from an unconstrained Gaussian); rates always use max(value, 0).
struct RtTrajectory {
  std::vector<double> R;
  double gamma = 0.0;
};

using InfectionSeries = std::vector<int>;

inline void check_length(std::size_t length, const DiseaseConfig& config, const char* what) {
  if (length != static_cast<std::size_t>(config.horizon))
    throw ConfigError(std::string(what) + " has length " + std::to_string(length) +
                          ", expected horizon " + std::to_string(config.horizon),
                      "horizon");
}

/// Total infectiousness phi_t = sum_{s<t} n_s w_{t-s} plus the day-0 seeds.
inline std::vector<double> compute_phi(std::span<const int> n, const DiseaseConfig& config) {
  check_length(n.size(), config, "infection series");
  const auto& w = config.profile;
  const int T = config.horizon;
  std::vector<double> phi(static_cast<std::size_t>(T), 0.0);
  for (int t = 1; t <= T; ++t) {
    double total = config.initial_infected * w.weight(t);
    for (int s = std::max(1, t - w.support()); s < t; ++s) total += n[s - 1] * w.weight(t - s);
    phi[t - 1] = total;
  }
  return phi;
}

inline double effective_rate(double R, double phi, double gamma) {
  return std::max(std::max(R, 0.0) * phi + std::max(gamma, 0.0), kMinRate);
}

struct Simulation {
  InfectionSeries n;
  std::vector<double> phi;
};

/// Draws n_t ~ Poisson(max(R_t,0) phi_t + gamma) day by day; cumulative
/// infections (seeds included) never exceed the population size.
inline Simulation simulate_with_phi(const RtTrajectory& rt, const DiseaseConfig& config, Rng& rng) {
  check_length(rt.R.size(), config, "R trajectory");
  const auto& w = config.profile;
  const int T = config.horizon;
  Simulation sim{InfectionSeries(static_cast<std::size_t>(T), 0),
                 std::vector<double>(static_cast<std::size_t>(T), 0.0)};
  long cumulative = config.initial_infected;
  for (int t = 1; t <= T; ++t) {
    double phi = config.initial_infected * w.weight(t);
    for (int s = std::max(1, t - w.support()); s < t; ++s) phi += sim.n[s - 1] * w.weight(t - s);
    sim.phi[t - 1] = phi;
    const double mean = std::max(rt.R[t - 1], 0.0) * phi + std::max(rt.gamma, 0.0);
    const long remaining = config.population_size - cumulative;
    if (remaining > 0 && std::isnan(mean))
      throw NumericalError("non-finite infection rate on day " + std::to_string(t));
    long draw = 0;
    // Beyond 1e12 the draw exceeds any representable population with
    // probability 1 to double precision.
    if (remaining > 0 && mean > kSaturatingRate) draw = remaining;
    else if (remaining > 0 && mean > 0.0) draw = std::poisson_distribution<long>(mean)(rng);
    draw = std::min(draw, remaining);
    sim.n[t - 1] = static_cast<int>(draw);
    cumulative += draw;
  }
  return sim;
}

inline InfectionSeries simulate(const RtTrajectory& rt, const DiseaseConfig& config, Rng& rng) {
  return simulate_with_phi(rt, config, rng).n;
}

inline InfectionSeries simulate(const RtTrajectory& rt, const DiseaseConfig& config,
                                std::uint64_t seed) {
  Rng rng = make_stream(seed);
  return simulate(rt, config, rng);
}

inline double log_density(std::span<const int> n, std::span<const double> phi,
                          const RtTrajectory& rt) {
  double total = 0.0;
  for (std::size_t t = 0; t < n.size(); ++t) {
    const double lambda = effective_rate(rt.R[t], phi[t], rt.gamma);
    total += n[t] * std::log(lambda) - lambda - std::lgamma(n[t] + 1.0);
  }
  return total;
}

/// log M(n | R, gamma): sum of Poisson log-pmfs. Population truncation is
/// ignored.
inline double log_density(std::span<const int> n, const RtTrajectory& rt,
                          const DiseaseConfig& config) {
  check_length(rt.R.size(), config, "R trajectory");
  const auto phi = compute_phi(n, config);
  return log_density(n, phi, rt);
}

struct DensityGradient {
  std::vector<double> dR;
  double dgamma = 0.0;
};

/// Gradient of log_density in (R, gamma). Zero in R_t where R_t <= 0 (the
/// clamp is flat there).
inline DensityGradient grad_log_density(std::span<const int> n, std::span<const double> phi,
                                        const RtTrajectory& rt) {
  DensityGradient g{std::vector<double>(n.size(), 0.0), 0.0};
  for (std::size_t t = 0; t < n.size(); ++t) {
    const double lambda = effective_rate(rt.R[t], phi[t], rt.gamma);
    const double score = n[t] / lambda - 1.0;
    if (rt.R[t] > 0.0) g.dR[t] = phi[t] * score;
    if (rt.gamma > 0.0) g.dgamma += score;
  }
  return g;
}

inline DensityGradient grad_log_density(std::span<const int> n, const RtTrajectory& rt,
                                        const DiseaseConfig& config) {
  check_length(rt.R.size(), config, "R trajectory");
  const auto phi = compute_phi(n, config);
  return grad_log_density(n, phi, rt);
}

// Density of the simulator itself, population cap included. A day whose
// draw reached the remaining susceptible count r contributes
// P(Poisson(lambda) >= r); days after the cap contribute nothing. Equal to
// log_density while the cap is not reached.

/// d/d lambda_t of the per-day log-density under the capped simulator.
inline std::vector<double> capped_rate_scores(std::span<const int> n, std::span<const double> phi,
                                              const RtTrajectory& rt, const DiseaseConfig& config) {
  std::vector<double> u(n.size(), 0.0);
  long remaining = long(config.population_size) - config.initial_infected;
  for (std::size_t t = 0; t < n.size(); ++t) {
    const double lambda = effective_rate(rt.R[t], phi[t], rt.gamma);
    if (remaining <= 0) {
      u[t] = 0.0;
    } else if (n[t] >= remaining) {
      const double tail = boost::math::gamma_p(double(remaining), lambda);
      u[t] = tail > 0.0 ? boost::math::gamma_p_derivative(double(remaining), lambda) / tail
                        : remaining / lambda - 1.0;
    } else {
      u[t] = n[t] / lambda - 1.0;
    }
    remaining -= n[t];
  }
  return u;
}

inline double log_density_capped(std::span<const int> n, std::span<const double> phi, const RtTrajectory& rt,
                                 const DiseaseConfig& config) {
  double total = 0.0;
  long remaining = long(config.population_size) - config.initial_infected;
  for (std::size_t t = 0; t < n.size(); ++t) {
    const double lambda = effective_rate(rt.R[t], phi[t], rt.gamma);
    if (remaining <= 0) continue;
    if (n[t] >= remaining) total += std::log(boost::math::gamma_p(double(remaining), lambda));
    else total += n[t] * std::log(lambda) - lambda - std::lgamma(n[t] + 1.0);
    remaining -= n[t];
  }
  return total;
}

inline DensityGradient grad_log_density_capped(std::span<const int> n, std::span<const double> phi,
                                               const RtTrajectory& rt, const DiseaseConfig& config) {
  const auto u = capped_rate_scores(n, phi, rt, config);
  DensityGradient g{std::vector<double>(n.size(), 0.0), 0.0};
  for (std::size_t t = 0; t < n.size(); ++t) {
    if (rt.R[t] > 0.0) g.dR[t] = phi[t] * u[t];
    if (rt.gamma > 0.0) g.dgamma += u[t];
  }
  return g;
}

}  // namespace rtinfer
