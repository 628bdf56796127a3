#pragma once

// Multivariate Gaussian values with diagonal or dense covariance, exact
// sampling, and the closed-form Gaussian CRPS with analytic gradients.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "dppl/rng.hpp"

namespace dppl {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

inline bool all_finite(const VectorXd& v) { return v.allFinite(); }

// Largest |eigenvalue| tolerance scale used for PSD validation and clipping.
inline double psd_tolerance(const Eigen::SelfAdjointEigenSolver<MatrixXd>& es) {
  const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
  return 1e-10 * scale;
}

}  // namespace detail

// Standard normal pdf/cdf. The cdf goes through erfc in double precision;
// absolute error is below 1e-15 over the double range.
inline double norm_pdf(double z) {
  return 0.3989422804014326779399461 * std::exp(-0.5 * z * z);
}

inline double norm_cdf(double z) {
  return 0.5 * std::erfc(-z * 0.7071067811865475244008444);
}

/// Mean plus diagonal-or-dense covariance; the prior and posterior of the
/// projection layer.
class GaussianVec {
 public:
  static GaussianVec diagonal(VectorXd mean, VectorXd variances) {
    if (mean.size() < 1) throw std::invalid_argument("GaussianVec: empty mean");
    if (mean.size() != variances.size())
      throw std::invalid_argument("GaussianVec: mean/variance length mismatch");
    if (!detail::all_finite(mean) || !detail::all_finite(variances))
      throw std::invalid_argument("GaussianVec: non-finite entries");
    if ((variances.array() < 0).any())
      throw std::invalid_argument("GaussianVec: negative variance");
    GaussianVec g;
    g.mean_ = std::move(mean);
    g.var_ = std::move(variances);
    g.is_diagonal_ = true;
    return g;
  }

  static GaussianVec dense(VectorXd mean, MatrixXd cov) {
    if (mean.size() < 1) throw std::invalid_argument("GaussianVec: empty mean");
    if (cov.rows() != cov.cols() || cov.rows() != mean.size())
      throw std::invalid_argument("GaussianVec: covariance shape mismatch");
    if (!detail::all_finite(mean) || !cov.allFinite())
      throw std::invalid_argument("GaussianVec: non-finite entries");
    const double scale = cov.cwiseAbs().maxCoeff();
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
      throw std::invalid_argument("GaussianVec: covariance not symmetric");
    MatrixXd sym = 0.5 * (cov + cov.transpose());
    if (scale > 0) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -detail::psd_tolerance(es))
        throw std::invalid_argument("GaussianVec: covariance not positive semi-definite");
    }
    return dense_trusted(std::move(mean), std::move(sym));
  }

  // Construction from a path that already guarantees symmetry and PSD-ness
  // (the propagation routines symmetrize and clip themselves).
  static GaussianVec dense_trusted(VectorXd mean, MatrixXd cov) {
    GaussianVec g;
    g.mean_ = std::move(mean);
    g.cov_ = std::move(cov);
    g.is_diagonal_ = false;
    return g;
  }

  Index size() const { return mean_.size(); }
  bool is_diagonal() const { return is_diagonal_; }
  const VectorXd& mean() const { return mean_; }

  /// Marginal variances, diag(Sigma).
  VectorXd variances() const {
    return is_diagonal_ ? var_ : VectorXd(cov_.diagonal());
  }

  VectorXd marginal_stddev() const { return variances().cwiseSqrt(); }

  /// Covariance as a dense matrix (materializes for the diagonal case).
  MatrixXd covariance() const {
    if (!is_diagonal_) return cov_;
    MatrixXd c = MatrixXd::Zero(size(), size());
    c.diagonal() = var_;
    return c;
  }

 private:
  GaussianVec() = default;
  VectorXd mean_;
  VectorXd var_;   // diagonal storage
  MatrixXd cov_;   // dense storage
  bool is_diagonal_ = true;
};

/// Gradient of the summed Gaussian CRPS with respect to the marginal means
/// and standard deviations.
struct CrpsGrad {
  VectorXd d_mu;
  VectorXd d_sigma;
};

// CRPS of N(mu, sigma^2) against observation y:
//   sigma * [ z(2P(z)-1) + 2p(z) - 1/sqrt(pi) ],  z = (y-mu)/sigma,
// with the degenerate limit |y-mu| at sigma = 0.
inline double crps_gaussian_scalar(double mu, double sigma, double y) {
  if (!std::isfinite(mu) || !std::isfinite(sigma) || !std::isfinite(y))
    throw std::invalid_argument("crps_gaussian_scalar: non-finite input");
  if (sigma < 0) throw std::invalid_argument("crps_gaussian_scalar: sigma < 0");
  if (sigma == 0) return std::abs(y - mu);
  const double z = (y - mu) / sigma;
  constexpr double inv_sqrt_pi = 0.5641895835477562869480795;
  return sigma * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z) - inv_sqrt_pi);
}

/// Sum of univariate CRPS over the marginals of `dist`.
inline double crps_gaussian_sum(const GaussianVec& dist, const VectorXd& y) {
  if (y.size() != dist.size())
    throw std::invalid_argument("crps_gaussian_sum: length mismatch");
  const VectorXd& mu = dist.mean();
  const VectorXd sd = dist.marginal_stddev();
  double total = 0.0;
  for (Index j = 0; j < y.size(); ++j)
    total += crps_gaussian_scalar(mu[j], sd[j], y[j]);
  return total;
}

// d/dmu    = 1 - 2 P(z)
// d/dsigma = 2 p(z) - 1/sqrt(pi)
inline CrpsGrad crps_gaussian_grad(const GaussianVec& dist, const VectorXd& y) {
  if (y.size() != dist.size())
    throw std::invalid_argument("crps_gaussian_grad: length mismatch");
  const VectorXd& mu = dist.mean();
  const VectorXd sd = dist.marginal_stddev();
  CrpsGrad g;
  g.d_mu.resize(y.size());
  g.d_sigma.resize(y.size());
  constexpr double inv_sqrt_pi = 0.5641895835477562869480795;
  for (Index j = 0; j < y.size(); ++j) {
    if (sd[j] <= 0)
      throw std::invalid_argument("crps_gaussian_grad: gradient undefined at sigma = 0");
    const double z = (y[j] - mu[j]) / sd[j];
    g.d_mu[j] = 1.0 - 2.0 * norm_cdf(z);
    g.d_sigma[j] = 2.0 * norm_pdf(z) - inv_sqrt_pi;
  }
  return g;
}

/// Diagonal Gaussian negative log-likelihood.
inline double nll_gaussian(const GaussianVec& dist, const VectorXd& y) {
  if (y.size() != dist.size())
    throw std::invalid_argument("nll_gaussian: length mismatch");
  const VectorXd& mu = dist.mean();
  const VectorXd var = dist.variances();
  constexpr double log_2pi = 1.8378770664093454835606594728112;
  double total = 0.0;
  for (Index j = 0; j < y.size(); ++j) {
    if (var[j] <= 0) throw std::invalid_argument("nll_gaussian: zero variance");
    const double r = y[j] - mu[j];
    total += 0.5 * (log_2pi + std::log(var[j])) + r * r / (2.0 * var[j]);
  }
  return total;
}

namespace detail {

// Factor F with F F^T = Sigma. Lower Cholesky when SPD; otherwise an
// eigenvalue factor with negatives clipped inside the PSD tolerance, hard
// error below it.
inline MatrixXd covariance_factor(const MatrixXd& cov) {
  const Index n = cov.rows();
  if (cov.cwiseAbs().maxCoeff() == 0.0) return MatrixXd::Zero(n, n);
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("covariance_factor: eigendecomposition failed");
  const double tol = psd_tolerance(es);
  VectorXd lam = es.eigenvalues();
  for (Index i = 0; i < n; ++i) {
    if (lam[i] < -tol)
      throw std::runtime_error("covariance_factor: covariance is indefinite");
    lam[i] = std::max(lam[i], 0.0);
  }
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

}  // namespace detail

/// Reparameterized draws mu + Sigma^{1/2} xi, one row per draw. Deterministic
/// given the seed.
inline MatrixXd sample(const GaussianVec& dist, Index count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample: count must be positive");
  const Index n = dist.size();
  Rng rng(seed);
  MatrixXd out(count, n);
  if (dist.is_diagonal()) {
    const VectorXd sd = dist.marginal_stddev();
    for (Index i = 0; i < count; ++i)
      for (Index j = 0; j < n; ++j)
        out(i, j) = dist.mean()[j] + sd[j] * rng.normal();
    return out;
  }
  const MatrixXd factor = detail::covariance_factor(dist.covariance());
  VectorXd xi(n);
  for (Index i = 0; i < count; ++i) {
    for (Index j = 0; j < n; ++j) xi[j] = rng.normal();
    out.row(i) = (dist.mean() + factor * xi).transpose();
  }
  return out;
}

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Empirical CRPS estimate mean|Y-y| - mean|Y-Y'|/2 from `count` independent
/// pairs of draws, with the Monte-Carlo standard error of the estimate.
inline McEstimate crps_monte_carlo_se(const GaussianVec& dist, const VectorXd& y,
                                      Index count, std::uint64_t seed) {
  if (count < 2) throw std::invalid_argument("crps_monte_carlo: count < 2");
  if (y.size() != dist.size())
    throw std::invalid_argument("crps_monte_carlo: length mismatch");
  const Index n = dist.size();
  Rng rng(seed);
  const bool diag = dist.is_diagonal();
  const VectorXd sd = dist.marginal_stddev();
  MatrixXd factor;
  if (!diag) factor = detail::covariance_factor(dist.covariance());

  double sum = 0.0, sum_sq = 0.0;
  VectorXd a(n), b(n), xi(n);
  for (Index i = 0; i < count; ++i) {
    if (diag) {
      for (Index j = 0; j < n; ++j) a[j] = dist.mean()[j] + sd[j] * rng.normal();
      for (Index j = 0; j < n; ++j) b[j] = dist.mean()[j] + sd[j] * rng.normal();
    } else {
      for (Index j = 0; j < n; ++j) xi[j] = rng.normal();
      a = dist.mean() + factor * xi;
      for (Index j = 0; j < n; ++j) xi[j] = rng.normal();
      b = dist.mean() + factor * xi;
    }
    const double s = (a - y).cwiseAbs().sum() - 0.5 * (a - b).cwiseAbs().sum();
    sum += s;
    sum_sq += s * s;
  }
  McEstimate est;
  est.value = sum / static_cast<double>(count);
  const double var =
      (sum_sq - sum * sum / static_cast<double>(count)) / static_cast<double>(count - 1);
  est.std_error = std::sqrt(std::max(var, 0.0) / static_cast<double>(count));
  return est;
}

inline double crps_monte_carlo(const GaussianVec& dist, const VectorXd& y, Index count,
                               std::uint64_t seed) {
  return crps_monte_carlo_se(dist, y, count, seed).value;
}

}  // namespace dppl
