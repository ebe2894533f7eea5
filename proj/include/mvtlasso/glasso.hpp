#pragma once

#include "mvtlasso/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace mvtlasso::glasso {

struct GlassoSettings {
  double lambda = 0.1;
  int max_iter = 200;
  // Max elementwise change of the covariance estimate per sweep, and bound on
  // the KKT residual, both relative to the mean diagonal of S.
  double tol = 1e-5;
  bool penalize_diagonal = true;
};

/// State carried between solves on nearby problems (λ paths, EM iterations).
struct WarmStart {
  Matrix w;     // current covariance estimate Θ⁻¹
  Matrix beta;  // column j holds the lasso coefficients of the j-th sub-problem
};

struct Solution {
  PrecisionEstimate estimate;
  WarmStart state;
  int sweeps = 0;
  double kkt = 0.0;
};

namespace detail {

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

inline void validate_scatter(const Matrix& s) {
  if (s.rows() != s.cols()) throw ShapeError("glasso: S must be square");
  if (s.rows() < 1) throw ShapeError("glasso: S is empty");
  if (!s.allFinite()) throw ValidationError("glasso: S contains NaN or Inf");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if (mvtlasso::detail::max_abs_asymmetry(s) > 1e-10 * scale) throw ValidationError("glasso: S is not symmetric");
  for (Index i = 0; i < s.rows(); ++i)
    if (!(s(i, i) > 0.0))
      throw ValidationError("glasso: S has a non-positive diagonal entry at " + std::to_string(i) +
                            " (zero-variance variable)");
}

inline double scale_of(const Matrix& s) { return s.diagonal().mean(); }

}  // namespace detail

inline double l1_norm(const Matrix& theta, bool include_diagonal) {
  double acc = theta.cwiseAbs().sum();
  if (!include_diagonal) acc -= theta.diagonal().cwiseAbs().sum();
  return acc;
}

/// −ln det Θ + tr(SΘ) + λ‖Θ‖₁.
inline double objective(const Matrix& theta, const Matrix& s, double lambda, bool penalize_diagonal = true) {
  Eigen::LLT<Matrix> llt(theta);
  if (llt.info() != Eigen::Success) throw NumericError("glasso objective: Theta is not positive definite");
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -log_det + (s.cwiseProduct(theta)).sum() + lambda * l1_norm(theta, penalize_diagonal);
}

/// Largest violation of the subgradient optimality conditions.
inline double kkt_residual(const Matrix& theta, const Matrix& s, double lambda, bool penalize_diagonal = true) {
  Eigen::LLT<Matrix> llt(theta);
  if (!theta.allFinite() || llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const Index p = theta.rows();
  const Matrix w = llt.solve(Matrix::Identity(p, p));
  double worst = 0.0;
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < p; ++i) {
      const double g = s(i, j) - w(i, j);
      double v;
      if (i == j && !penalize_diagonal) {
        v = std::abs(g);
      } else if (theta(i, j) == 0.0) {
        v = std::max(std::abs(g) - lambda, 0.0);
      } else {
        v = std::abs(g + lambda * (theta(i, j) > 0.0 ? 1.0 : -1.0));
      }
      worst = std::max(worst, v);
    }
  }
  return worst;
}

/// Smallest λ for which the off-diagonal solution is empty.
inline double lambda_max(const Matrix& s) {
  double m = 0.0;
  for (Index j = 0; j < s.cols(); ++j)
    for (Index i = 0; i < j; ++i) m = std::max(m, std::abs(s(i, j)));
  return m;
}

/// Block coordinate descent on the covariance: each sweep solves one lasso
/// per column by coordinate descent and writes W₁₂ = W₁₁β back.
inline Solution solve_detailed(const Matrix& s, const GlassoSettings& settings, const WarmStart* warm = nullptr) {
  detail::validate_scatter(s);
  if (!(settings.lambda > 0.0)) throw ValidationError("glasso: lambda must be positive");
  if (!(settings.tol > 0.0)) throw ValidationError("glasso: tol must be positive");
  if (settings.max_iter < 1) throw ValidationError("glasso: max_iter must be positive");

  const Index p = s.rows();
  const double lambda = settings.lambda;
  const double diag_shift = settings.penalize_diagonal ? lambda : 0.0;
  const double scale = detail::scale_of(s);
  const double tol = settings.tol * scale;

  Solution out;
  if (lambda_max(s) <= lambda) {
    Matrix theta = Matrix::Zero(p, p);
    for (Index i = 0; i < p; ++i) theta(i, i) = 1.0 / (s(i, i) + diag_shift);
    out.state.w = Matrix::Zero(p, p);
    out.state.w.diagonal() = s.diagonal().array() + diag_shift;
    out.state.beta = Matrix::Zero(p, p);
    out.kkt = kkt_residual(theta, s, lambda, settings.penalize_diagonal);
    out.estimate = PrecisionEstimate::from_theta(std::move(theta), lambda);
    return out;
  }

  Matrix w;
  Matrix beta;
  bool warm_used = false;
  if (warm != nullptr && warm->w.rows() == p && warm->beta.rows() == p) {
    w = warm->w;
    w.diagonal() = s.diagonal().array() + diag_shift;
    beta = warm->beta;
    Eigen::LLT<Matrix> check(w);
    if (check.info() == Eigen::Success && w.allFinite() && beta.allFinite())
      warm_used = true;
    else
      w.resize(0, 0);
  }
  auto cold_start = [&] {
    w = s;
    w.diagonal().array() += diag_shift;
    beta = Matrix::Zero(p, p);
  };
  if (w.size() == 0) cold_start();

  Vector wb(p);
  std::vector<Index> active;
  double inner_tol = 1e-2 * tol;
  auto assemble_theta = [&]() {
    Matrix theta = Matrix::Zero(p, p);
    for (Index j = 0; j < p; ++j) {
      double acc = w(j, j);
      for (Index k = 0; k < p; ++k)
        if (k != j) acc -= w(k, j) * beta(k, j);
      const double tjj = 1.0 / acc;
      theta(j, j) = tjj;
      for (Index k = 0; k < p; ++k)
        if (k != j) theta(k, j) = -beta(k, j) * tjj;
    }
    return Matrix(0.5 * (theta + theta.transpose()));
  };

  double last_kkt = std::numeric_limits<double>::infinity();
  Matrix theta;
  for (int sweep = 1; sweep <= settings.max_iter; ++sweep) {
    double max_change = 0.0;
    bool lost_pd = false;
    for (Index j = 0; j < p && !lost_pd; ++j) {
      auto b = beta.col(j);
      b(j) = 0.0;
      wb.noalias() = w * b;
      auto update = [&](Index k) {
        const double old = b(k);
        const double r = s(k, j) - (wb(k) - w(k, k) * old);
        const double updated = detail::soft_threshold(r, lambda) / w(k, k);
        if (updated == old) return 0.0;
        wb.noalias() += w.col(k) * (updated - old);
        b(k) = updated;
        return std::abs(updated - old) * w(k, k);
      };
      // Full passes pick the active set; on it the lasso stationarity
      // W_AA β_A = s_A − λ·sign(β_A) is solved exactly when the signs agree,
      // which coordinate passes alone reach slowly for ill-conditioned W₁₁.
      for (int full = 0; full < 500; ++full) {
        double delta = 0.0;
        active.clear();
        for (Index k = 0; k < p; ++k) {
          if (k == j) continue;
          delta = std::max(delta, update(k));
          if (b(k) != 0.0) active.push_back(k);
        }
        if (delta < inner_tol || active.empty()) break;
        const Index na = static_cast<Index>(active.size());
        Matrix waa(na, na);
        Vector rhs(na);
        for (Index a = 0; a < na; ++a) {
          for (Index c = 0; c < na; ++c) waa(a, c) = w(active[a], active[c]);
          rhs(a) = s(active[a], j) - lambda * (b(active[a]) > 0.0 ? 1.0 : -1.0);
        }
        Eigen::LLT<Matrix> llt(waa);
        bool exact = false;
        if (llt.info() == Eigen::Success) {
          const Vector x = llt.solve(rhs);
          exact = x.allFinite();
          for (Index a = 0; a < na && exact; ++a) exact = (x(a) > 0.0) == (b(active[a]) > 0.0) && x(a) != 0.0;
          if (exact)
            for (Index a = 0; a < na; ++a) {
              const Index k = active[a];
              wb.noalias() += w.col(k) * (x(a) - b(k));
              b(k) = x(a);
            }
        }
        if (!exact)
          for (int it = 0; it < 50; ++it) {
            double d_active = 0.0;
            for (Index k : active) d_active = std::max(d_active, update(k));
            if (d_active < inner_tol) break;
          }
      }
      // The Schur complement w_jj − βᵀW₁₁β is 1/Θ_jj; it must stay positive.
      const double schur = w(j, j) - b.dot(wb);
      if (!(schur > 0.0) || !wb.allFinite()) {
        lost_pd = true;
        break;
      }
      for (Index k = 0; k < p; ++k) {
        if (k == j) continue;
        max_change = std::max(max_change, std::abs(wb(k) - w(k, j)));
        w(k, j) = wb(k);
        w(j, k) = wb(k);
      }
    }
    out.sweeps = sweep;
    if (lost_pd) {
      if (!warm_used) throw NumericError("glasso: covariance iterate lost positive definiteness");
      // A warm start far from the new problem can leave the PD cone.
      warm_used = false;
      cold_start();
      inner_tol = 1e-2 * tol;
      continue;
    }
    if (max_change < tol) {
      theta = assemble_theta();
      last_kkt = kkt_residual(theta, s, lambda, settings.penalize_diagonal);
      if (last_kkt <= tol) {
        out.kkt = last_kkt;
        out.state = WarmStart{w, beta};
        out.estimate = PrecisionEstimate::from_theta(std::move(theta), lambda);
        return out;
      }
      inner_tol = std::max(inner_tol * 0.1, 1e-12 * scale);
    }
  }
  if (theta.size() == 0) {
    theta = assemble_theta();
    last_kkt = kkt_residual(theta, s, lambda, settings.penalize_diagonal);
  }
  throw ConvergenceError("glasso: no convergence after " + std::to_string(settings.max_iter) +
                             " sweeps (KKT residual " + std::to_string(last_kkt) + ")",
                         theta, last_kkt);
}

inline PrecisionEstimate solve(const Matrix& s, const GlassoSettings& settings) {
  return solve_detailed(s, settings).estimate;
}

/// Solves along a λ grid from the largest value down, warm-starting each
/// problem from its predecessor. Results are returned in input order.
inline std::vector<PrecisionEstimate> solve_path(const Matrix& s, const std::vector<double>& lambdas,
                                                 GlassoSettings settings) {
  std::vector<std::size_t> order(lambdas.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return lambdas[a] > lambdas[b]; });
  std::vector<PrecisionEstimate> out(lambdas.size());
  std::optional<WarmStart> warm;
  for (auto idx : order) {
    settings.lambda = lambdas[idx];
    auto sol = solve_detailed(s, settings, warm ? &*warm : nullptr);
    warm = std::move(sol.state);
    out[idx] = std::move(sol.estimate);
  }
  return out;
}

}  // namespace mvtlasso::glasso
