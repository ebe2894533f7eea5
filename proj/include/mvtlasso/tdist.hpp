#pragma once

#include "mvtlasso/core.hpp"
#include "mvtlasso/rng.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace mvtlasso::tdist {

/// Multivariate t parameters with a cached Cholesky factor of the dispersion.
class MvtParams {
 public:
  MvtParams(double nu, Vector mu, Matrix sigma) : nu_(nu), mu_(std::move(mu)), sigma_(std::move(sigma)) {
    if (!(nu_ > 0.0)) throw ValidationError("degrees of freedom must be positive");
    if (sigma_.rows() != sigma_.cols() || sigma_.rows() != mu_.size())
      throw ShapeError("dispersion must be p×p with p = len(mu)");
    llt_.compute(sigma_);
    if (llt_.info() != Eigen::Success) throw NumericError("dispersion matrix is not positive definite");
    const auto& l = llt_.matrixLLT();
    log_det_sigma_ = 2.0 * l.diagonal().array().log().sum();
  }

  double nu() const noexcept { return nu_; }
  const Vector& mu() const noexcept { return mu_; }
  const Matrix& sigma() const noexcept { return sigma_; }
  Index dim() const noexcept { return mu_.size(); }
  Matrix cholesky_lower() const { return llt_.matrixL(); }
  double log_det_sigma() const noexcept { return log_det_sigma_; }

  /// (x−μ)ᵀΣ⁻¹(x−μ) through the Cholesky factor.
  double delta(const Vector& x) const {
    const Vector z = llt_.matrixL().solve(x - mu_);
    return z.squaredNorm();
  }

 private:
  double nu_;
  Vector mu_;
  Matrix sigma_;
  Eigen::LLT<Matrix> llt_;
  double log_det_sigma_ = 0.0;
};

/// log density of t_p(ν, μ, Σ) from δ and log|Σ|; shared by every caller that
/// already holds the precision.
inline double log_density_from_delta(double delta, double nu, Index p, double log_det_sigma) {
  const double pd = static_cast<double>(p);
  return std::lgamma(0.5 * (nu + pd)) - std::lgamma(0.5 * nu) - 0.5 * pd * std::log(nu * std::numbers::pi) -
         0.5 * log_det_sigma - 0.5 * (nu + pd) * std::log1p(delta / nu);
}

inline double log_density(const Vector& x, const MvtParams& params) {
  if (x.size() != params.dim()) throw ShapeError("log_density: dimension mismatch");
  return log_density_from_delta(params.delta(x), params.nu(), params.dim(), params.log_det_sigma());
}

/// E[τ | y] = (ν + p) / (ν + δ).
inline double tau_posterior_mean(double delta, double nu, Index p) {
  return (nu + static_cast<double>(p)) / (nu + delta);
}

/// Draws `count` columns μ + N/√τ with τ ~ Gamma(shape ν/2, rate ν/2) and
/// N ~ N(0, Σ).
///
/// Column j is drawn from Philox(seed, first_stream + j): first τ, then p
/// standard normals z, and the column is μ + L·z/√τ with Σ = LLᵀ. Two calls
/// that differ only in (μ, Σ) therefore share τ and z column by column.
inline Matrix sample(const MvtParams& params, Index count, std::uint64_t seed, std::uint64_t first_stream = 0) {
  if (count < 1) throw ValidationError("sample: count must be at least 1");
  const Index p = params.dim();
  const Matrix l = params.cholesky_lower();
  // std::gamma_distribution takes (shape, scale); rate ν/2 is scale 2/ν.
  const double shape = 0.5 * params.nu();
  const double scale = 2.0 / params.nu();
  Matrix out(p, count);
  Vector z(p);
  for (Index j = 0; j < count; ++j) {
    Philox rng(seed, first_stream + static_cast<std::uint64_t>(j));
    std::gamma_distribution<double> gamma(shape, scale);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double tau = gamma(rng);
    for (Index i = 0; i < p; ++i) z(i) = normal(rng);
    out.col(j) = params.mu() + (l * z) / std::sqrt(tau);
  }
  return out;
}

}  // namespace mvtlasso::tdist
