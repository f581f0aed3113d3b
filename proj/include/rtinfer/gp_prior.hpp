#pragma once

// Gaussian-process prior over R (constant mean 1), exponential prior over
// gamma, and the Gaussian variational family q = N(mu, L L^T) over (R, gamma).
// Everything here is closed form: the prior cross-entropy E_q[log p(R, gamma)],
// the entropy of q, and their gradients.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "rtinfer/disease_model.hpp"
#include "rtinfer/error.hpp"
#include "rtinfer/random.hpp"

namespace rtinfer {

inline constexpr double kLog2Pi = 1.8378770664093453;

struct GpKernelConfig {
  double lengthscale = 10.0;
  double amplitude = 0.3;
  double jitter = 1e-6;

  void validate() const {
    if (!(lengthscale > 0.0)) throw ConfigError("must be positive", "prior.lengthscale");
    if (!(amplitude > 0.0)) throw ConfigError("must be positive", "prior.amplitude");
    if (!(jitter >= 0.0)) throw ConfigError("must be non-negative", "prior.jitter");
  }
};

/// Squared-exponential Gram matrix over days 1..T plus diagonal jitter.
inline Eigen::MatrixXd gram_matrix(int horizon, const GpKernelConfig& kernel) {
  Eigen::MatrixXd K(horizon, horizon);
  const double s2 = kernel.amplitude * kernel.amplitude;
  for (int i = 0; i < horizon; ++i)
    for (int j = 0; j < horizon; ++j) {
      const double d = double(i - j) / kernel.lengthscale;
      K(i, j) = s2 * std::exp(-0.5 * d * d) + (i == j ? kernel.jitter : 0.0);
    }
  return K;
}

/// Factorized prior over (R_1..R_T, gamma).
class GpPrior {
 public:
  GpPrior(int horizon, const GpKernelConfig& kernel, double gamma_mean)
      : GpPrior(horizon, kernel, gamma_mean, (kernel.validate(), gram_matrix(horizon, kernel))) {}

  /// Prior with an explicit Gram matrix in place of the kernel's.
  GpPrior(int horizon, const GpKernelConfig& kernel, double gamma_mean, Eigen::MatrixXd gram)
      : horizon_(horizon), kernel_(kernel), gamma_mean_(gamma_mean), gram_(std::move(gram)) {
    if (!(gamma_mean > 0.0)) throw ConfigError("must be positive", "importation_prior_mean");
    llt_.compute(gram_);
    if (llt_.info() != Eigen::Success)
      throw ConfigError("Gram matrix is not positive definite; increase the jitter", "prior.jitter");
    const Eigen::MatrixXd chol = llt_.matrixL();
    log_det_ = 2.0 * chol.diagonal().array().log().sum();
    precision_ = llt_.solve(Eigen::MatrixXd::Identity(horizon, horizon));
  }

  int horizon() const { return horizon_; }
  int dim() const { return horizon_ + 1; }
  double gamma_mean() const { return gamma_mean_; }
  const GpKernelConfig& kernel() const { return kernel_; }
  const Eigen::MatrixXd& gram() const { return gram_; }
  const Eigen::MatrixXd& precision() const { return precision_; }
  Eigen::MatrixXd gram_cholesky() const { return llt_.matrixL(); }
  double log_det_gram() const { return log_det_; }

  /// log N(R; 1, K) + log Exp(gamma; mean), the exponential log-density
  /// extended linearly to gamma < 0.
  double log_density(const Eigen::VectorXd& value) const {
    const Eigen::VectorXd diff = value.head(horizon_).array() - 1.0;
    const Eigen::MatrixXd chol = llt_.matrixL();
    const Eigen::VectorXd white = chol.triangularView<Eigen::Lower>().solve(diff);
    return -0.5 * (white.squaredNorm() + horizon_ * kLog2Pi + log_det_) - std::log(gamma_mean_) -
           value(horizon_) / gamma_mean_;
  }

 private:
  int horizon_;
  GpKernelConfig kernel_;
  double gamma_mean_;
  Eigen::MatrixXd gram_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd precision_;
  double log_det_ = 0.0;
};

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Mean and raw Cholesky parameters of q over (R_1..R_T, gamma). Entries
/// strictly below the diagonal of `L_raw` are used as is; the diagonal goes
/// through softplus; entries above the diagonal are ignored.
struct VariationalState {
  Eigen::VectorXd mu;
  Eigen::MatrixXd L_raw;

  int dim() const { return static_cast<int>(mu.size()); }
  int horizon() const { return dim() - 1; }

  Eigen::MatrixXd cholesky() const {
    Eigen::MatrixXd L = L_raw.triangularView<Eigen::StrictlyLower>();
    for (int i = 0; i < dim(); ++i) L(i, i) = softplus(L_raw(i, i));
    return L;
  }

  Eigen::MatrixXd covariance() const {
    const Eigen::MatrixXd L = cholesky();
    return L * L.transpose();
  }

  /// Builds raw parameters from a lower-triangular factor with positive
  /// diagonal.
  static VariationalState from_cholesky(Eigen::VectorXd mu, const Eigen::MatrixXd& L) {
    VariationalState s{std::move(mu), Eigen::MatrixXd(L.triangularView<Eigen::StrictlyLower>())};
    for (int i = 0; i < s.dim(); ++i) s.L_raw(i, i) = softplus_inverse(L(i, i));
    return s;
  }

  /// mu at the prior mean (1 for R, prior mean for gamma); covariance a
  /// quarter of the prior covariance, gamma uncorrelated.
  static VariationalState initial(const GpPrior& prior) {
    const int T = prior.horizon();
    Eigen::VectorXd mu = Eigen::VectorXd::Ones(T + 1);
    mu(T) = prior.gamma_mean();
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(T + 1, T + 1);
    L.topLeftCorner(T, T) = 0.5 * prior.gram_cholesky();
    L(T, T) = 0.5 * prior.gamma_mean();
    return from_cholesky(std::move(mu), L);
  }

  bool finite() const { return mu.allFinite() && L_raw.allFinite(); }
};

/// Gradient with respect to (mu, L_raw); only the lower triangle of L_raw is
/// meaningful.
struct StateGradient {
  Eigen::VectorXd mu;
  Eigen::MatrixXd L_raw;

  static StateGradient zero(int dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim)};
  }
  StateGradient& operator+=(const StateGradient& o) {
    mu += o.mu;
    L_raw += o.L_raw;
    return *this;
  }
};

/// Maps a gradient with respect to the factor L to one with respect to L_raw.
inline Eigen::MatrixXd chain_to_raw(const VariationalState& state, const Eigen::MatrixXd& dL) {
  Eigen::MatrixXd g = dL.triangularView<Eigen::Lower>();
  for (int i = 0; i < state.dim(); ++i) g(i, i) *= sigmoid(state.L_raw(i, i));
  return g;
}

/// E_q[log p(R, gamma)] in closed form.
inline double prior_cross_entropy(const VariationalState& state, const GpPrior& prior) {
  const int T = prior.horizon();
  if (state.dim() != T + 1) throw ConfigError("state dimension does not match horizon", "horizon");
  const Eigen::MatrixXd L = state.cholesky();
  const Eigen::MatrixXd chol = prior.gram_cholesky();
  const Eigen::VectorXd diff = state.mu.head(T).array() - 1.0;
  const double quad = chol.triangularView<Eigen::Lower>().solve(diff).squaredNorm();
  const double trace = chol.triangularView<Eigen::Lower>().solve(L.topRows(T)).squaredNorm();
  const double gaussian = -0.5 * (quad + trace + T * kLog2Pi + prior.log_det_gram());
  const double exponential = -std::log(prior.gamma_mean()) - state.mu(T) / prior.gamma_mean();
  return gaussian + exponential;
}

/// Differential entropy of q.
inline double entropy(const VariationalState& state) {
  double log_det = 0.0;
  for (int i = 0; i < state.dim(); ++i) log_det += std::log(softplus(state.L_raw(i, i)));
  return 0.5 * state.dim() * (1.0 + kLog2Pi) + log_det;
}

/// Gradient of a scalar with respect to the mean and the factor L itself
/// (lower triangle), before the positivity map.
struct FactorGradient {
  Eigen::VectorXd mu;
  Eigen::MatrixXd L;

  static FactorGradient zero(int dim) { return {Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim)}; }
  FactorGradient& operator+=(const FactorGradient& o) {
    mu += o.mu;
    L += o.L;
    return *this;
  }
};

/// Exact gradient of prior_cross_entropy + entropy with respect to (mu, L).
inline FactorGradient grad_prior_terms_factor(const VariationalState& state, const Eigen::MatrixXd& L,
                                              const GpPrior& prior) {
  const int T = prior.horizon();
  const int D = T + 1;
  FactorGradient g = FactorGradient::zero(D);
  const Eigen::VectorXd diff = state.mu.head(T).array() - 1.0;
  g.mu.head(T) = -prior.precision() * diff;
  g.mu(T) = -1.0 / prior.gamma_mean();
  g.L.topRows(T) = -prior.precision() * L.topRows(T);
  for (int i = 0; i < D; ++i) g.L(i, i) += 1.0 / L(i, i);
  g.L = g.L.triangularView<Eigen::Lower>();
  return g;
}

/// Exact gradient of prior_cross_entropy + entropy with respect to (mu, L_raw).
inline StateGradient grad_prior_terms(const VariationalState& state, const GpPrior& prior) {
  const auto g = grad_prior_terms_factor(state, state.cholesky(), prior);
  return {g.mu, chain_to_raw(state, g.L)};
}

struct QSample {
  Eigen::VectorXd value;  // (R_1..R_T, gamma)
  Eigen::VectorXd xi;     // standard-normal draw with value = mu + L xi

  RtTrajectory trajectory() const {
    const auto T = static_cast<std::size_t>(value.size() - 1);
    RtTrajectory rt;
    rt.R.assign(value.data(), value.data() + T);
    rt.gamma = value(static_cast<Eigen::Index>(T));
    return rt;
  }
};

inline QSample sample_q(const VariationalState& state, const Eigen::MatrixXd& L, Rng& rng) {
  std::normal_distribution<double> normal;
  QSample s;
  s.xi.resize(state.dim());
  for (int i = 0; i < state.dim(); ++i) s.xi(i) = normal(rng);
  s.value = state.mu + L.triangularView<Eigen::Lower>() * s.xi;
  return s;
}

inline QSample sample_q(const VariationalState& state, Rng& rng) {
  return sample_q(state, state.cholesky(), rng);
}

}  // namespace rtinfer
