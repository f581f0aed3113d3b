#pragma once

// Stochastic variational inference for (R, gamma).
//
// The objective is E_q[log p(R,gamma)] + H[q] + E_{xi} E_{n ~ M(R(xi),gamma(xi))}
// E_alpha[log p(x | n, alpha)], a lower bound on log p(x). The first two terms
// are closed form (gp_prior.hpp). The third is differentiated with a
// score-function estimator in (R, gamma) chained through the reparameterization
// (R, gamma) = mu + L xi:
//
//   grad_mu = mean_k  s_k (l_k - b_k)
//   grad_L  = mean_k  s_k xi_k^T (l_k - b_k)     (lower triangle)
//
// with s_k = grad_{R,gamma} log M(n_k | R_k, gamma_k), l_k a single-draw
// log-likelihood estimate, and b_k the leave-one-out batch mean of l.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "rtinfer/disease_model.hpp"
#include "rtinfer/error.hpp"
#include "rtinfer/gp_prior.hpp"
#include "rtinfer/observation.hpp"
#include "rtinfer/parallel.hpp"
#include "rtinfer/random.hpp"
#include "rtinfer/test_profile.hpp"

namespace rtinfer {

struct SviConfig {
  int batch_size = 16;
  int iterations = 4000;
  double learning_rate = 0.02;
  /// Step size of the covariance factor relative to learning_rate. Its
  /// entries number D(D+1)/2 and mostly see noise, so at full rate their
  /// diffusion inflates the posterior spread.
  double factor_lr_scale = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int warmup_iterations = 0;
  int elbo_eval_samples = 64;
  int smoothing_window = 100;
  int checkpoint_every = 0;
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (batch_size < 2) throw ConfigError("must be at least 2 (control variate)", "svi.batch_size");
    if (iterations < 1) throw ConfigError("must be positive", "svi.iterations");
    if (!(learning_rate > 0.0)) throw ConfigError("must be positive", "svi.learning_rate");
    if (!(factor_lr_scale > 0.0)) throw ConfigError("must be positive", "svi.factor_learning_rate_scale");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("must lie in (0, 1)", "svi.adam_betas");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("must lie in (0, 1)", "svi.adam_betas");
    if (warmup_iterations < 0) throw ConfigError("must be non-negative", "svi.warmup_iterations");
    if (elbo_eval_samples < 1) throw ConfigError("must be positive", "svi.elbo_eval_samples");
    if (smoothing_window < 1) throw ConfigError("must be positive", "svi.smoothing_window");
    if (checkpoint_every < 0) throw ConfigError("must be non-negative", "svi.checkpoint_every");
  }
};

/// Everything needed to evaluate the generative model for one data set.
struct InferenceModel {
  DiseaseConfig disease;
  TestProfile profile;
  ObservationScheme scheme;
  GpPrior prior;
  LikelihoodOptions likelihood{};
  int latent_draws = 1;
  /// observation_lag of (scheme, profile).
  int lag = 0;

  InferenceModel(DiseaseConfig disease_, TestProfile profile_, ObservationScheme scheme_,
                 const GpKernelConfig& kernel, LikelihoodOptions likelihood_ = {})
      : disease(std::move(disease_)),
        profile(std::move(profile_)),
        scheme(std::move(scheme_)),
        prior(disease.horizon, kernel, disease.importation_prior_mean),
        likelihood(likelihood_) {
    disease.validate();
    scheme.validate(disease);
    lag = observation_lag(scheme, profile);
  }

  int horizon() const { return disease.horizon; }
  int dim() const { return disease.horizon + 1; }
};

enum class StreamPurpose : std::uint64_t { kGradient = 0, kElbo = 1 };

/// One simulated element of a gradient batch.
struct BatchElement {
  double payoff = 0.0;        // log-likelihood estimate l_k
  Eigen::VectorXd score;      // grad_{R,gamma} log M(n_k | R_k, gamma_k)
  Eigen::VectorXd gamma_day;  // per-day terms of the gamma score (sum = score(T))
  Eigen::VectorXd tail;       // tail(t) = sum of the terms that can depend on n_t
  Eigen::VectorXd xi;
};

inline BatchElement draw_batch_element(const VariationalState& state, const Eigen::MatrixXd& L,
                                       std::span<const int> x, const InferenceModel& model, Rng& rng) {
  const int T = model.horizon();
  const auto q = sample_q(state, L, rng);
  const auto rt = q.trajectory();
  const auto sim = simulate_with_phi(rt, model.disease, rng);
  BatchElement e;
  Eigen::VectorXd terms = Eigen::VectorXd::Zero(T);
  std::vector<double> day_terms;
  day_terms.reserve(static_cast<std::size_t>(T));
  for (int draw = 0; draw < model.latent_draws; ++draw) {
    day_terms.clear();
    loglik(x, sim.n, model.disease, model.scheme, model.profile, rng, model.likelihood, &day_terms);
    terms += Eigen::Map<const Eigen::VectorXd>(day_terms.data(), T);
  }
  terms /= model.latent_draws;
  e.payoff = terms.sum();
  // suffix(k) = sum of terms for days k..T-1 (0-based); suffix(T) = 0.
  Eigen::VectorXd suffix = Eigen::VectorXd::Zero(T + 1);
  for (int t = T - 1; t >= 0; --t) suffix(t) = suffix(t + 1) + terms(t);
  e.tail.resize(T);
  for (int t = 0; t < T; ++t) e.tail(t) = model.lag < T - t ? suffix(t + model.lag) : 0.0;
  // Score of the simulator as run, population cap included; the uncapped
  // Poisson score has non-zero mean once samples exhaust the population.
  const auto u = capped_rate_scores(sim.n, sim.phi, rt, model.disease);
  e.score = Eigen::VectorXd::Zero(model.dim());
  e.gamma_day = Eigen::VectorXd::Zero(T);
  for (int t = 0; t < T; ++t) {
    const auto i = static_cast<std::size_t>(t);
    if (rt.R[i] > 0.0) e.score(t) = sim.phi[i] * u[i];
    if (rt.gamma > 0.0) e.gamma_day(t) = u[i];
  }
  e.score(T) = e.gamma_day.sum();
  e.xi = q.xi;
  return e;
}

inline std::vector<BatchElement> draw_batch(const VariationalState& state, std::span<const int> x,
                                            const InferenceModel& model, int batch_size, std::uint64_t seed,
                                            std::uint64_t iteration, int threads) {
  const Eigen::MatrixXd L = state.cholesky();
  std::vector<BatchElement> batch(static_cast<std::size_t>(batch_size));
  parallel_for(batch.size(), threads, [&](std::size_t k) {
    Rng rng = make_stream(seed, iteration, k, static_cast<std::uint64_t>(StreamPurpose::kGradient));
    batch[k] = draw_batch_element(state, L, x, model, rng);
  });
  return batch;
}

struct GradientOptions {
  bool control_variate = true;
  /// Pairs the day-t score with the log-likelihood terms of days t + lag
  /// onward. Earlier days do not depend on n_t, so their product with its
  /// score has mean zero and dropping them keeps the estimator unbiased.
  bool reward_to_go = true;
  bool include_prior = true;
  /// Replaces every l_k by this constant (score zero-mean checks); implies
  /// the whole-series payoff.
  std::optional<double> constant_payoff;
};

/// Gradient estimate with respect to (mu, L) from an existing batch.
inline FactorGradient factor_gradient_from_batch(const VariationalState& state, const Eigen::MatrixXd& L,
                                                 const InferenceModel& model,
                                                 const std::vector<BatchElement>& batch,
                                                 const GradientOptions& opts, double* mean_payoff = nullptr) {
  const int D = model.dim();
  const int T = model.horizon();
  const auto b = static_cast<Eigen::Index>(batch.size());
  double sum = 0.0;
  for (const auto& e : batch) sum += opts.constant_payoff.value_or(e.payoff);
  Eigen::VectorXd tail_sum = Eigen::VectorXd::Zero(T);
  for (const auto& e : batch) tail_sum += e.tail;
  const double loo = opts.control_variate ? 1.0 / double(b - 1) : 0.0;

  Eigen::MatrixXd weighted(D, b), xi(D, b);
  for (Eigen::Index k = 0; k < b; ++k) {
    const auto& e = batch[static_cast<std::size_t>(k)];
    if (opts.reward_to_go && !opts.constant_payoff) {
      const Eigen::VectorXd centred = e.tail - loo * (tail_sum - e.tail);
      weighted.col(k).head(T) = e.score.head(T).cwiseProduct(centred);
      weighted(T, k) = e.gamma_day.dot(centred);
    } else {
      const double payoff = opts.constant_payoff.value_or(e.payoff);
      weighted.col(k) = e.score * (payoff - loo * (sum - payoff));
    }
    xi.col(k) = e.xi;
  }
  FactorGradient g{weighted.rowwise().sum() / double(b),
                   Eigen::MatrixXd((weighted * xi.transpose() / double(b)).triangularView<Eigen::Lower>())};
  if (opts.include_prior) g += grad_prior_terms_factor(state, L, model.prior);
  if (mean_payoff) *mean_payoff = sum / double(b);
  if (!g.mu.allFinite() || !g.L.allFinite())
    throw NumericalError("non-finite gradient estimate (mean payoff " + std::to_string(sum / double(b)) + ")");
  return g;
}

struct GradientEstimate {
  StateGradient gradient;
  double mean_payoff = 0.0;
};

/// Batched gradient estimate with respect to (mu, L_raw); batch element k of
/// iteration i draws from the stream (seed, i, k).
inline GradientEstimate estimate_gradient(const VariationalState& state, std::span<const int> x,
                                          const InferenceModel& model, int batch_size, std::uint64_t seed,
                                          std::uint64_t iteration = 0, int threads = 1,
                                          const GradientOptions& opts = {}) {
  if (batch_size < 2) throw ConfigError("must be at least 2 (control variate)", "svi.batch_size");
  const auto batch = draw_batch(state, x, model, batch_size, seed, iteration, threads);
  GradientEstimate est;
  const auto g = factor_gradient_from_batch(state, state.cholesky(), model, batch, opts, &est.mean_payoff);
  est.gradient = {g.mu, chain_to_raw(state, g.L)};
  return est;
}

/// Monte Carlo estimate of E_q E_n E_alpha[log p(x | n, alpha)] over fresh draws.
inline double estimate_likelihood_term(const VariationalState& state, std::span<const int> x,
                                       const InferenceModel& model, int samples, std::uint64_t seed,
                                       std::uint64_t tag = 0, int threads = 1) {
  const Eigen::MatrixXd L = state.cholesky();
  std::vector<double> values(static_cast<std::size_t>(samples));
  parallel_for(values.size(), threads, [&](std::size_t k) {
    Rng rng = make_stream(seed, tag, k, static_cast<std::uint64_t>(StreamPurpose::kElbo));
    const auto rt = sample_q(state, L, rng).trajectory();
    const auto n = simulate(rt, model.disease, rng);
    values[k] = loglik(x, n, model.disease, model.scheme, model.profile, rng, model.likelihood);
  });
  double total = 0.0;
  for (double v : values) total += v;
  return total / samples;
}

inline double estimate_elbo(const VariationalState& state, std::span<const int> x, const InferenceModel& model,
                            int samples, std::uint64_t seed, int threads = 1) {
  if (samples < 1) throw ConfigError("must be positive", "svi.elbo_eval_samples");
  return prior_cross_entropy(state, model.prior) + entropy(state) +
         estimate_likelihood_term(state, x, model, samples, seed, 0, threads);
}

// ---------------------------------------------------------------------------
// Optimization

/// Optimization coordinates whitened by the prior:
///   mu = m0 + A m,   L = A L_white,   A = blockdiag(chol(K), gamma_mean),
/// with m0 the prior mean. L_white is lower triangular with a softplus
/// diagonal, so L is the lower-triangular Cholesky factor of q's covariance.
struct WhitenedParameters {
  Eigen::VectorXd m;
  Eigen::MatrixXd L_raw;
};

class PriorWhitening {
 public:
  explicit PriorWhitening(const GpPrior& prior) {
    const int T = prior.horizon();
    A_ = Eigen::MatrixXd::Zero(T + 1, T + 1);
    A_.topLeftCorner(T, T) = prior.gram_cholesky();
    A_(T, T) = prior.gamma_mean();
    offset_ = Eigen::VectorXd::Ones(T + 1);
    offset_(T) = prior.gamma_mean();
  }

  /// Whitened coordinates of VariationalState::initial.
  WhitenedParameters initial() const {
    const auto D = A_.rows();
    WhitenedParameters w{Eigen::VectorXd::Zero(D), Eigen::MatrixXd::Zero(D, D)};
    w.L_raw.diagonal().setConstant(softplus_inverse(0.5));
    return w;
  }

  static Eigen::MatrixXd factor(const WhitenedParameters& w) {
    Eigen::MatrixXd L = w.L_raw.triangularView<Eigen::StrictlyLower>();
    for (Eigen::Index i = 0; i < L.rows(); ++i) L(i, i) = softplus(w.L_raw(i, i));
    return L;
  }

  VariationalState to_state(const WhitenedParameters& w) const {
    const Eigen::MatrixXd L = A_.triangularView<Eigen::Lower>() * factor(w);
    return VariationalState::from_cholesky(offset_ + A_.triangularView<Eigen::Lower>() * w.m, L);
  }

  /// Chains a (mu, L) gradient to the whitened coordinates.
  StateGradient chain(const WhitenedParameters& w, const FactorGradient& g) const {
    StateGradient out;
    out.mu = A_.transpose() * g.mu;
    out.L_raw = (A_.transpose() * g.L).triangularView<Eigen::Lower>();
    for (Eigen::Index i = 0; i < out.L_raw.rows(); ++i) out.L_raw(i, i) *= sigmoid(w.L_raw(i, i));
    return out;
  }

 private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd offset_;
};

struct AdamMoments {
  Eigen::VectorXd m_mu, v_mu;
  Eigen::MatrixXd m_L, v_L;
  long step = 0;

  static AdamMoments zero(int dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim),
            Eigen::MatrixXd::Zero(dim, dim), 0};
  }
};

/// Ascent step on whitened parameters.
inline void adam_ascent(WhitenedParameters& params, AdamMoments& adam, const StateGradient& g, double lr,
                        const SviConfig& config) {
  ++adam.step;
  const double c1 = 1.0 - std::pow(config.beta1, double(adam.step));
  const double c2 = 1.0 - std::pow(config.beta2, double(adam.step));
  auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
    m = config.beta1 * m + (1.0 - config.beta1) * grad;
    v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
    param.array() += lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config.adam_epsilon);
  };
  update(params.m, adam.m_mu, adam.v_mu, g.mu);
  lr *= config.factor_lr_scale;
  update(params.L_raw, adam.m_L, adam.v_L, g.L_raw);
}

/// Everything needed to resume a run bit-exactly. Random streams are a pure
/// function of (seed, iteration, element), so the iteration index is the
/// stream position.
struct FitCheckpoint {
  WhitenedParameters params;
  AdamMoments adam;
  int iteration = 0;
  std::uint64_t seed = 0;
  std::vector<double> elbo_trace;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool contains(double v) const { return lower <= v && v <= upper; }
};

struct PosteriorSummary {
  std::vector<double> mean_R;
  std::vector<double> sd_R;
  double mean_gamma = 0.0;
  double sd_gamma = 0.0;
  std::vector<double> elbo_trace;
  std::vector<double> elbo_smoothed;

  int horizon() const { return static_cast<int>(mean_R.size()); }

  double quantile(int day_index, double p) const {
    const boost::math::normal_distribution<double> dist(mean_R[static_cast<std::size_t>(day_index)],
                                                        sd_R[static_cast<std::size_t>(day_index)]);
    return boost::math::quantile(dist, p);
  }

  /// Central interval with probability `level` under the normal marginal.
  Interval credible_interval(int day_index, double level) const {
    return {quantile(day_index, 0.5 - 0.5 * level), quantile(day_index, 0.5 + 0.5 * level)};
  }
};

/// Trailing moving average; the first window-1 entries average what exists.
inline std::vector<double> moving_average(const std::vector<double>& values, int window) {
  std::vector<double> out(values.size());
  double running = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    running += values[i];
    if (i >= static_cast<std::size_t>(window)) running -= values[i - static_cast<std::size_t>(window)];
    out[i] = running / double(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
  }
  return out;
}

inline PosteriorSummary summarize(const VariationalState& state, std::vector<double> elbo_trace, int window) {
  const int T = state.horizon();
  const Eigen::MatrixXd L = state.cholesky();
  PosteriorSummary s;
  for (int t = 0; t < T; ++t) {
    s.mean_R.push_back(state.mu(t));
    s.sd_R.push_back(L.row(t).norm());
  }
  s.mean_gamma = state.mu(T);
  s.sd_gamma = L.row(T).norm();
  s.elbo_smoothed = moving_average(elbo_trace, window);
  s.elbo_trace = std::move(elbo_trace);
  return s;
}

/// Thrown when parameters stop being finite; carries the last finite state.
class FitDiverged : public NumericalError {
 public:
  FitDiverged(const std::string& what, FitCheckpoint last)
      : NumericalError(what), last_(std::move(last)) {}
  const FitCheckpoint& last_checkpoint() const { return last_; }

 private:
  FitCheckpoint last_;
};

struct FitResult {
  PosteriorSummary summary;
  VariationalState state;
  FitCheckpoint checkpoint;
};

inline FitCheckpoint initial_checkpoint(const InferenceModel& model, std::uint64_t seed) {
  return {PriorWhitening(model.prior).initial(), AdamMoments::zero(model.dim()), 0, seed, {}};
}

/// Runs Adam ascent on the ELBO from `resume` (or from the prior-based
/// initialization) until config.iterations. `on_checkpoint` is called every
/// config.checkpoint_every iterations.
inline FitResult fit(std::span<const int> x, const InferenceModel& model, const SviConfig& config, int threads = 1,
                     const FitCheckpoint* resume = nullptr,
                     const std::function<void(const FitCheckpoint&)>& on_checkpoint = {}) {
  config.validate();
  if (x.size() != static_cast<std::size_t>(model.horizon()))
    throw ConfigError("observation series has length " + std::to_string(x.size()) + ", expected " +
                          std::to_string(model.horizon()),
                      "horizon");
  const PriorWhitening whitening(model.prior);
  FitCheckpoint cp = resume ? *resume : initial_checkpoint(model, config.rng_seed);
  if (cp.params.m.size() != model.dim()) throw ConfigError("checkpoint dimension does not match horizon", "resume");
  cp.elbo_trace.reserve(static_cast<std::size_t>(config.iterations));
  for (; cp.iteration < config.iterations; ++cp.iteration) {
    const VariationalState state = whitening.to_state(cp.params);
    const Eigen::MatrixXd L = state.cholesky();
    double mean_payoff = 0.0;
    StateGradient gradient;
    try {
      if (!state.finite()) throw NumericalError("non-finite variational state");
      const auto batch = draw_batch(state, x, model, config.batch_size, cp.seed,
                                    static_cast<std::uint64_t>(cp.iteration), threads);
      gradient = whitening.chain(cp.params, factor_gradient_from_batch(state, L, model, batch, {}, &mean_payoff));
    } catch (const NumericalError& e) {
      throw FitDiverged(std::string(e.what()) + " at iteration " + std::to_string(cp.iteration), cp);
    }
    cp.elbo_trace.push_back(prior_cross_entropy(state, model.prior) + entropy(state) + mean_payoff);
    double lr = config.learning_rate;
    if (config.warmup_iterations > 0)
      lr *= std::min(1.0, double(cp.iteration + 1) / double(config.warmup_iterations));
    WhitenedParameters previous = cp.params;
    AdamMoments previous_adam = cp.adam;
    adam_ascent(cp.params, cp.adam, gradient, lr, config);
    if (!cp.params.m.allFinite() || !cp.params.L_raw.allFinite()) {
      cp.params = std::move(previous);
      cp.adam = std::move(previous_adam);
      cp.elbo_trace.pop_back();
      throw FitDiverged("non-finite parameters at iteration " + std::to_string(cp.iteration), cp);
    }
    if (on_checkpoint && config.checkpoint_every > 0 && (cp.iteration + 1) % config.checkpoint_every == 0) {
      FitCheckpoint snapshot = cp;
      ++snapshot.iteration;
      on_checkpoint(snapshot);
    }
  }
  VariationalState state = whitening.to_state(cp.params);
  return {summarize(state, cp.elbo_trace, config.smoothing_window), std::move(state), std::move(cp)};
}

}  // namespace rtinfer
