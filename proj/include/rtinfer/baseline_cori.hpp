#pragma once

// Conjugate-gamma R_t posterior of Cori et al. applied directly to observed
// counts, with the usual correction of shifting counts back by the mean
// reporting delay. No partial-observability correction is attempted.

#include <algorithm>
#include <cmath>
#include <span>
#include <variant>
#include <vector>

#include <boost/math/distributions/gamma.hpp>

#include "rtinfer/disease_model.hpp"
#include "rtinfer/error.hpp"
#include "rtinfer/observation.hpp"
#include "rtinfer/test_profile.hpp"

namespace rtinfer {

struct CoriConfig {
  int window = 7;
  double prior_shape = 1.0;
  double prior_scale = 5.0;
  int mean_delay_shift = 0;

  void validate() const {
    if (window < 1) throw ConfigError("must be at least 1", "cori.window");
    if (!(prior_shape > 0.0)) throw ConfigError("must be positive", "cori.prior_shape");
    if (!(prior_scale > 0.0)) throw ConfigError("must be positive", "cori.prior_scale");
    if (mean_delay_shift < 0) throw ConfigError("must be non-negative", "cori.mean_delay_shift");
  }
};

struct GammaPosterior {
  bool has_estimate = false;
  double shape = 0.0;
  double scale = 0.0;

  double mean() const { return shape * scale; }
  double quantile(double p) const {
    return boost::math::quantile(boost::math::gamma_distribution<double>(shape, scale), p);
  }
};

/// Per-day posteriors for days 1..T. Day t pools the shifted counts and
/// infectiousness-weighted past counts over the window ending at t.
inline std::vector<GammaPosterior> cori_posterior(std::span<const int> x, const InfectiousnessProfile& w,
                                                  const CoriConfig& config) {
  config.validate();
  const int T = static_cast<int>(x.size());
  const int usable = std::max(0, T - config.mean_delay_shift);
  std::vector<double> y(static_cast<std::size_t>(usable));
  for (int t = 1; t <= usable; ++t) y[t - 1] = x[static_cast<std::size_t>(t - 1 + config.mean_delay_shift)];

  std::vector<double> lambda(static_cast<std::size_t>(usable), 0.0);
  for (int s = 1; s <= usable; ++s)
    for (int h = 1; h <= w.support() && h < s; ++h) lambda[s - 1] += y[s - h - 1] * w.weight(h);

  std::vector<GammaPosterior> out(static_cast<std::size_t>(T));
  for (int t = 1; t <= usable; ++t) {
    double cases = 0.0, pressure = 0.0;
    for (int s = std::max(1, t - config.window + 1); s <= t; ++s) {
      cases += y[s - 1];
      pressure += lambda[s - 1];
    }
    if (pressure <= 0.0) continue;
    out[t - 1] = {true, config.prior_shape + cases, 1.0 / (1.0 / config.prior_scale + pressure)};
  }
  return out;
}

/// Mean days from infection to a positive report under the scheme: mean
/// conversion offset plus the testing delay (uniform), half the mean positive
/// duration capped at 30 days (cross-sectional), or the mean wait for the
/// next scheduled test (longitudinal).
inline int mean_observation_delay(const ObservationScheme& scheme, const TestProfile& profile) {
  double delay = profile.mean_convert_offset();
  if (const auto* u = std::get_if<UniformUndersampling>(&scheme.kind)) {
    delay += u->delay.mean();
  } else if (std::holds_alternative<CrossSectional>(scheme.kind)) {
    delay += 0.5 * std::min(profile.duration_pmf().mean(), 30.0);
  } else {
    delay += 0.5 * (std::get<Longitudinal>(scheme.kind).cadence - 1);
  }
  return static_cast<int>(std::lround(delay));
}

}  // namespace rtinfer
