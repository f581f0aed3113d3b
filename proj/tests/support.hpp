#pragma once

#include <cmath>
#include <map>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "rtinfer/disease_model.hpp"

namespace rtinfer::testing {

/// Running mean and standard error (Welford).
class Stats {
 public:
  void add(double v) {
    ++n_;
    const double d = v - mean_;
    mean_ += d / double(n_);
    m2_ += d * (v - mean_);
  }
  long count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / double(n_ - 1) : 0.0; }
  double se() const { return std::sqrt(variance() / double(n_)); }

 private:
  long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// p-value of the two-sample chi-square homogeneity test on integer samples.
/// Bins with fewer than `min_expected` expected counts are pooled with their
/// neighbour.
inline double two_sample_chi_square_p(const std::vector<int>& a, const std::vector<int>& b,
                                      double min_expected = 5.0) {
  std::map<int, std::pair<double, double>> counts;
  for (int v : a) counts[v].first += 1;
  for (int v : b) counts[v].second += 1;
  const double na = double(a.size()), nb = double(b.size()), n = na + nb;
  std::vector<std::pair<double, double>> bins;
  std::pair<double, double> pending{0, 0};
  for (const auto& [value, c] : counts) {
    pending.first += c.first;
    pending.second += c.second;
    const double total = pending.first + pending.second;
    if (std::min(total * na / n, total * nb / n) >= min_expected) {
      bins.push_back(pending);
      pending = {0, 0};
    }
  }
  if (pending.first + pending.second > 0) {
    if (bins.empty()) bins.push_back(pending);
    else bins.back().first += pending.first, bins.back().second += pending.second;
  }
  if (bins.size() < 2) return 1.0;
  double stat = 0.0;
  for (const auto& [ca, cb] : bins) {
    const double total = ca + cb;
    const double ea = total * na / n, eb = total * nb / n;
    stat += (ca - ea) * (ca - ea) / ea + (cb - eb) * (cb - eb) / eb;
  }
  const boost::math::chi_squared_distribution<double> dist(double(bins.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

inline DiseaseConfig small_config(int horizon, std::vector<double> weights, int seeds, int population = 1000) {
  DiseaseConfig c;
  c.horizon = horizon;
  c.population_size = population;
  c.initial_infected = seeds;
  c.profile = InfectiousnessProfile(std::move(weights));
  return c;
}

}  // namespace rtinfer::testing
