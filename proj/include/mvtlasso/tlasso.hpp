#pragma once

#include "mvtlasso/core.hpp"
#include "mvtlasso/glasso.hpp"
#include "mvtlasso/tdist.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace mvtlasso::tlasso {

struct TlassoSettings {
  double nu = 3.0;
  double lambda = 0.1;
  int max_em_iter = 100;
  double tol = 1e-4;  // on max(‖ΔΘ‖max/‖Θ‖max, √(ΔμᵀΘΔμ))
  glasso::GlassoSettings glasso{};
};

struct TlassoState {
  Vector mu;
  Matrix theta;
  Vector tau;
  std::vector<double> objective_trace;  // penalized log-likelihood after each M-step
  int iterations = 0;
  bool converged = false;
  glasso::WarmStart glasso_state;
};

inline double log_det_spd(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw NumericError("matrix is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

/// τ_i = (ν+p)/(ν+δ(x_i; μ, Θ)) for every column.
inline Vector tlasso_estep(const Matrix& x, const Vector& mu, const Matrix& theta, double nu) {
  if (mu.size() != x.rows() || theta.rows() != x.rows()) throw ShapeError("tlasso_estep: dimension mismatch");
  const Matrix d = x.colwise() - mu;
  const Vector delta = (d.cwiseProduct(theta * d)).colwise().sum().transpose();
  Vector tau(x.cols());
  for (Index i = 0; i < x.cols(); ++i) tau(i) = tdist::tau_posterior_mean(std::max(delta(i), 0.0), nu, x.rows());
  return tau;
}

struct Moments {
  Vector mu;
  Matrix scatter;
};

/// μ = Σ τx/Σ τ and Σ = (1/n) Σ τ (x−μ)(x−μ)ᵀ.
inline Moments tlasso_moments(const Matrix& x, const Vector& tau) {
  Moments m;
  m.mu = x * tau / tau.sum();
  const Matrix d = x.colwise() - m.mu;
  m.scatter = d * tau.asDiagonal() * d.transpose() / static_cast<double>(x.cols());
  m.scatter = 0.5 * (m.scatter + m.scatter.transpose());
  const double top = m.scatter.diagonal().maxCoeff();
  if (!(top > 0.0) || (m.scatter.diagonal().array() <= 1e-12 * top).any())
    throw NumericError("tlasso: weighted scatter is degenerate (zero-variance gene)");
  return m;
}

/// Σ log t_p(x_i | ν, μ, Θ⁻¹) − (n/2)·λ‖Θ‖₁. The prior weight n/2 makes the
/// GLASSO step the exact maximizer of the penalized M-step objective.
inline double penalized_loglik(const Matrix& x, const Vector& mu, const Matrix& theta, double nu, double lambda,
                               bool penalize_diagonal = true) {
  const double log_det_sigma = -log_det_spd(theta);
  const Matrix d = x.colwise() - mu;
  const Vector delta = (d.cwiseProduct(theta * d)).colwise().sum().transpose();
  double acc = 0.0;
  for (Index i = 0; i < x.cols(); ++i)
    acc += tdist::log_density_from_delta(std::max(delta(i), 0.0), nu, x.rows(), log_det_sigma);
  return acc - 0.5 * static_cast<double>(x.cols()) * lambda * glasso::l1_norm(theta, penalize_diagonal);
}

/// Initial point: coordinate-wise median location and GLASSO on the
/// correlation matrix, mapped back to the data scale.
inline TlassoState tlasso_initial(const Matrix& x, const TlassoSettings& settings) {
  const Index p = x.rows();
  TlassoState st;
  st.mu.resize(p);
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < x.cols(); ++j) row[static_cast<std::size_t>(j)] = x(i, j);
    const auto mid = row.begin() + static_cast<std::ptrdiff_t>(row.size() / 2);
    std::nth_element(row.begin(), mid, row.end());
    double med = *mid;
    if (row.size() % 2 == 0) med = 0.5 * (med + *std::max_element(row.begin(), mid));
    st.mu(i) = med;
  }
  const Matrix xc = x.colwise() - x.rowwise().mean();
  const Matrix cov = xc * xc.transpose() / static_cast<double>(x.cols());
  const double top = cov.diagonal().maxCoeff();
  if (!(top > 0.0) || (cov.diagonal().array() <= 1e-12 * top).any())
    throw NumericError("tlasso: empirical covariance is degenerate (zero-variance gene)");
  const Vector inv_sd = cov.diagonal().array().rsqrt();
  Matrix corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
  corr = 0.5 * (corr + corr.transpose());
  auto gs = settings.glasso;
  gs.lambda = settings.lambda;
  const auto sol = glasso::solve_detailed(corr, gs);
  st.theta = inv_sd.asDiagonal() * sol.estimate.theta * inv_sd.asDiagonal();
  st.tau = Vector::Ones(x.cols());
  return st;
}

/// One M-step for given weights.
inline void tlasso_mstep(const Matrix& x, const Vector& tau, const TlassoSettings& settings, TlassoState& st) {
  const Moments m = tlasso_moments(x, tau);
  auto gs = settings.glasso;
  gs.lambda = settings.lambda;
  const bool have_warm = st.glasso_state.w.rows() == x.rows();
  auto sol = glasso::solve_detailed(m.scatter, gs, have_warm ? &st.glasso_state : nullptr);
  st.mu = m.mu;
  st.theta = std::move(sol.estimate.theta);
  st.glasso_state = std::move(sol.state);
  st.tau = tau;
}

inline TlassoState tlasso_fit(const Matrix& x, const TlassoSettings& settings,
                              std::optional<TlassoState> start = std::nullopt) {
  if (x.cols() < 2) throw ValidationError("tlasso: need at least 2 samples");
  if (!(settings.lambda > 0.0)) throw ValidationError("tlasso: lambda must be positive");
  if (!(settings.nu > 0.0)) throw ValidationError("tlasso: nu must be positive");
  TlassoState st = start ? std::move(*start) : tlasso_initial(x, settings);
  st.objective_trace.clear();
  st.iterations = 0;
  st.converged = false;
  for (int it = 1; it <= settings.max_em_iter; ++it) {
    const Vector prev_mu = st.mu;
    const Matrix prev_theta = st.theta;
    const Vector tau = tlasso_estep(x, st.mu, st.theta, settings.nu);
    tlasso_mstep(x, tau, settings, st);
    st.objective_trace.push_back(
        penalized_loglik(x, st.mu, st.theta, settings.nu, settings.lambda, settings.glasso.penalize_diagonal));
    st.iterations = it;
    const Vector dmu = st.mu - prev_mu;
    const double change = std::max((st.theta - prev_theta).cwiseAbs().maxCoeff() / st.theta.cwiseAbs().maxCoeff(),
                                   std::sqrt(std::max(dmu.dot(st.theta * dmu), 0.0)));
    if (change < settings.tol) {
      st.converged = true;
      break;
    }
  }
  return st;
}

/// Penalty at which the weighted scatter of the fitted model has no
/// off-diagonal entry above it. The weights depend on the fit, so the value
/// is found by a short fixed-point iteration starting from the plain scatter.
inline double lambda_max(const Matrix& x, TlassoSettings settings, int rounds = 4) {
  const Matrix xc = x.colwise() - x.rowwise().mean();
  double lam = glasso::lambda_max(xc * xc.transpose() / static_cast<double>(x.cols()));
  if (!(lam > 0.0)) throw ValidationError("tlasso: scatter has no off-diagonal mass");
  settings.max_em_iter = std::min(settings.max_em_iter, 20);
  for (int r = 0; r < rounds; ++r) {
    settings.lambda = lam;
    const auto st = tlasso_fit(x, settings);
    const Vector tau = tlasso_estep(x, st.mu, st.theta, settings.nu);
    const double next = glasso::lambda_max(tlasso_moments(x, tau).scatter);
    if (std::abs(next - lam) <= 1e-3 * lam) return std::max(next, lam);
    lam = next;
  }
  return lam;
}

}  // namespace mvtlasso::tlasso
