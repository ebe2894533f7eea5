#pragma once

#include "mvtlasso/core.hpp"
#include "mvtlasso/glasso.hpp"
#include "mvtlasso/ica.hpp"
#include "mvtlasso/rank.hpp"
#include "mvtlasso/tdist.hpp"
#include "mvtlasso/tlasso.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace mvtlasso {

// Multi-view EM over unmixed loadings.
//
// Each view is unmixed as Y_d = X_d·W_d with W_d = U_d·Q_d·Λ_d: U_d is fixed at
// initialization (ICA unmixing, signal columns first, rescaled to the common
// data scale), Q_d is orthogonal and Λ_d diagonal positive. The first k_d
// columns of Y_d are t_p(ν, μ_d, Θ⁻¹) signal loadings and the rest are
// t_p(ν, 0, σ_d²I) noise loadings.
//
// The log-likelihood of one view carries the Jacobian p·ln|det W_d| (one
// factor per gene row of X_d). With that weight the likelihood is invariant
// to jointly rescaling signal loadings and Θ, so the signal scales of each
// view are pinned to a unit geometric mean.

struct WOptSettings {
  int max_iter = 10;
  double step = 0.5;  // length of the first trial rotation step
  double tol = 1e-8;  // relative objective decrease that ends the loop
  double quadratic_weight = 0.5;
  std::optional<double> jacobian_exponent;  // unset: number of genes
  bool fix_signal_scale = true;
};

struct MvtlassoSettings {
  double nu = 3.0;
  double lambda = 0.1;
  std::optional<std::vector<int>> k_per_view;  // unset: parallel analysis
  int max_em_iter = 50;
  double em_tol = 1e-5;
  WOptSettings w_opt{};
  std::uint64_t seed = 0;
  bool estimate_unmixing = true;  // false: W_d = I, no ICA and no W-step
  int warm_start_iter = 5;
  int ica_max_iter = 500;
  double ica_tol = 1e-6;
  int rank_permutations = 49;
  double rank_quantile = 0.95;
  glasso::GlassoSettings glasso{};
};

struct FitReport {
  ModelState model;
  TauMatrix tau;
  std::vector<double> q_trace;       // Q after each M-step
  std::vector<double> q_before;      // Q at the previous parameters, same τ
  std::vector<double> loglik_trace;  // penalized observed log-likelihood
  std::vector<bool> w_step_ok;
  Matrix scatter;  // last pooled signal scatter handed to GLASSO
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;
};

/// Orthogonal rotation and per-column scales of one view's unmixing.
struct UnmixingState {
  Matrix rotation;
  Vector scales;
};

struct WStepResult {
  UnmixingState state;
  double objective_before = 0.0;
  double objective_after = 0.0;
  int iterations = 0;
  bool ok = true;
};

struct MomentUpdate {
  std::vector<Vector> mu;
  Matrix sigma;  // pooled weighted scatter of the signal columns
  std::vector<double> noise_sigma;
};

namespace detail {

inline double jacobian_weight(const WOptSettings& opt, Index p) {
  return opt.jacobian_exponent ? *opt.jacobian_exponent : static_cast<double>(p);
}

inline Matrix polar(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a.transpose() * a);
  const Vector inv_sqrt = eig.eigenvalues().array().max(1e-300).rsqrt();
  return a * (eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose());
}

struct WProblem {
  const Matrix& x;  // pre-unmixed data, p×m
  int k;
  const Vector& mu;
  const Matrix& theta;
  double sigma;
  const Vector& tau;
  double c;  // quadratic weight
  double jac;
};

inline double w_objective(const WProblem& pr, const Matrix& q, const Vector& scales) {
  const Matrix u = pr.x * q;
  const Index m = u.cols();
  double acc = 0.0;
  if (pr.k > 0) {
    const Matrix d = (u.leftCols(pr.k) * scales.head(pr.k).asDiagonal()).colwise() - pr.mu;
    const Vector quad = d.cwiseProduct(pr.theta * d).colwise().sum().transpose();
    acc += pr.c * quad.dot(pr.tau.head(pr.k));
  }
  if (m > pr.k) {
    const Index r = m - pr.k;
    const Vector sq = u.rightCols(r).colwise().squaredNorm().transpose();
    acc += pr.c / (pr.sigma * pr.sigma) *
           (sq.array() * scales.tail(r).array().square() * pr.tau.tail(r).array()).sum();
  }
  return acc - pr.jac * scales.array().log().sum();
}

constexpr double kScaleMin = 1e-6;
constexpr double kScaleMax = 1e6;

// Per-column minimizer of a·s² − 2b·s − κ·ln s over s > 0.
inline double scale_root(double a, double b, double kappa) {
  if (!(a > 0.0)) return kScaleMax;
  return (b + std::sqrt(b * b + 2.0 * a * kappa)) / (2.0 * a);
}

inline Vector optimal_scales(const WProblem& pr, const Matrix& q, bool fix_signal_scale) {
  const Matrix u = pr.x * q;
  const Index m = u.cols();
  Vector s(m);
  Vector a(pr.k), b(pr.k);
  if (pr.k > 0) {
    const Matrix tu = pr.theta * u.leftCols(pr.k);
    const Vector tmu = pr.theta * pr.mu;
    for (Index i = 0; i < pr.k; ++i) {
      a(i) = pr.c * pr.tau(i) * u.col(i).dot(tu.col(i));
      b(i) = pr.c * pr.tau(i) * u.col(i).dot(tmu);
    }
    auto fill = [&](double kappa) {
      for (Index i = 0; i < pr.k; ++i) s(i) = std::clamp(scale_root(a(i), b(i), kappa), kScaleMin, kScaleMax);
    };
    if (!fix_signal_scale) {
      fill(pr.jac);
    } else {
      auto log_sum = [&](double kappa) {
        fill(kappa);
        return s.head(pr.k).array().log().sum();
      };
      double lo = pr.jac, hi = pr.jac;
      for (int i = 0; i < 200 && log_sum(hi) < 0.0; ++i) hi *= 2.0;
      for (int i = 0; i < 200 && log_sum(lo) > 0.0; ++i) lo *= 0.5;
      for (int i = 0; i < 200; ++i) {
        const double mid = std::sqrt(lo * hi);
        if (log_sum(mid) > 0.0)
          hi = mid;
        else
          lo = mid;
        if (hi / lo - 1.0 < 1e-15) break;
      }
      fill(std::sqrt(lo * hi));
      // Remove the residual of the bracketing so the gauge holds exactly.
      const double shift = s.head(pr.k).array().log().mean();
      s.head(pr.k) *= std::exp(-shift);
    }
  }
  for (Index i = pr.k; i < m; ++i) {
    const double a_noise = pr.c * pr.tau(i) * u.col(i).squaredNorm() / (pr.sigma * pr.sigma);
    s(i) = std::clamp(scale_root(a_noise, 0.0, pr.jac), kScaleMin, kScaleMax);
  }
  return s;
}

inline Matrix w_gradient(const WProblem& pr, const Matrix& q, const Vector& scales) {
  const Matrix u = pr.x * q;
  const Index m = u.cols();
  Matrix mcol(u.rows(), m);
  if (pr.k > 0) {
    const Matrix d = (u.leftCols(pr.k) * scales.head(pr.k).asDiagonal()).colwise() - pr.mu;
    mcol.leftCols(pr.k) = pr.theta * d;
    for (Index i = 0; i < pr.k; ++i) mcol.col(i) *= 2.0 * pr.c * pr.tau(i) * scales(i);
  }
  for (Index i = pr.k; i < m; ++i)
    mcol.col(i) = u.col(i) * (2.0 * pr.c * pr.tau(i) * scales(i) * scales(i) / (pr.sigma * pr.sigma));
  return pr.x.transpose() * mcol;
}

}  // namespace detail

/// W-subproblem objective c·tr((XW−M)ᵀΘ(XW−M)T₁) + (c/σ²)·tr(WᵀXᵀXW T₂) − J·ln|det W|
/// evaluated at W = Q·Λ on the pre-unmixed data.
inline double w_objective(const Matrix& pre_unmixed, int k, const Vector& mu, const Matrix& theta, double sigma,
                          const Vector& tau, const UnmixingState& state, const WOptSettings& opt = {}) {
  const detail::WProblem pr{pre_unmixed, k, mu, theta, sigma, tau, opt.quadratic_weight,
                            detail::jacobian_weight(opt, pre_unmixed.rows())};
  return detail::w_objective(pr, state.rotation, state.scales);
}

/// Decreases the W-subproblem objective from `current`: alternates the exact
/// scale update with a Riemannian gradient step on the rotation (polar
/// retraction, Armijo backtracking). Never returns a worse point.
inline WStepResult mstep_W(const Matrix& pre_unmixed, int k, const Vector& mu, const Matrix& theta, double sigma,
                           const Vector& tau, const UnmixingState& current, const WOptSettings& opt = {}) {
  const Index m = pre_unmixed.cols();
  if (current.rotation.rows() != m || current.rotation.cols() != m || current.scales.size() != m)
    throw ShapeError("mstep_W: unmixing state does not match the data");
  if (tau.size() != m) throw ShapeError("mstep_W: tau length must equal the number of columns");
  if (k < 0 || k > m) throw ValidationError("mstep_W: k out of range");
  const detail::WProblem pr{pre_unmixed, k, mu, theta, sigma, tau, opt.quadratic_weight,
                            detail::jacobian_weight(opt, pre_unmixed.rows())};

  WStepResult out;
  Matrix q = current.rotation;
  Vector s = current.scales;
  double f = detail::w_objective(pr, q, s);
  out.objective_before = f;
  double eta = -1.0;
  for (int it = 1; it <= opt.max_iter; ++it) {
    out.iterations = it;
    const double f_start = f;
    const Vector s_new = detail::optimal_scales(pr, q, opt.fix_signal_scale);
    const double f_s = detail::w_objective(pr, q, s_new);
    if (f_s <= f) {
      s = s_new;
      f = f_s;
    }
    const Matrix g = detail::w_gradient(pr, q, s);
    const Matrix qtg = q.transpose() * g;
    const Matrix xi = g - q * (0.5 * (qtg + qtg.transpose()));
    const double gnorm2 = xi.squaredNorm();
    if (gnorm2 > 0.0) {
      if (eta <= 0.0) eta = opt.step / std::sqrt(gnorm2);
      bool accepted = false;
      for (int bt = 0; bt < 40; ++bt) {
        const Matrix trial = detail::polar(q - eta * xi);
        const double ft = detail::w_objective(pr, trial, s);
        if (ft <= f - 1e-4 * eta * gnorm2) {
          q = trial;
          f = ft;
          accepted = true;
          break;
        }
        eta *= 0.5;
      }
      if (accepted) eta *= 2.0;
    }
    if (f_start - f <= opt.tol * std::max(1.0, std::abs(f_start))) break;
  }
  out.state = UnmixingState{q, s};
  out.objective_after = f;
  out.ok = std::isfinite(f) && f <= out.objective_before + 1e-10 * std::max(1.0, std::abs(out.objective_before));
  if (!out.ok) {
    out.state = current;
    out.objective_after = out.objective_before;
  }
  return out;
}

/// Convenience form on raw data and a square W whose columns are split into
/// norms (scales) and a rotation projected onto the orthogonal group.
inline Matrix mstep_W(const Matrix& x, int k, const Vector& mu, const Matrix& theta, double sigma, const Vector& tau,
                      const Matrix& current_w, const WOptSettings& opt) {
  if (current_w.rows() != x.cols()) throw ShapeError("mstep_W: W rows must equal X columns");
  UnmixingState st;
  st.scales = current_w.colwise().norm().transpose();
  if ((st.scales.array() <= 0.0).any()) throw SingularityError("mstep_W: W has a zero column");
  st.rotation = detail::polar(current_w * st.scales.cwiseInverse().asDiagonal());
  const auto res = mstep_W(x, k, mu, theta, sigma, tau, st, opt);
  return res.state.rotation * res.state.scales.asDiagonal();
}

/// Closed-form updates of μ_d, the pooled scatter Σ and σ_d from unmixed
/// loadings and weights.
inline MomentUpdate mstep_moments(const std::vector<Matrix>& y, const std::vector<int>& k, const TauMatrix& tau) {
  const std::size_t d_count = y.size();
  if (k.size() != d_count || tau.per_view.size() != d_count) throw ShapeError("mstep_moments: view count mismatch");
  if (d_count == 0) throw ValidationError("mstep_moments: no views");
  tau.validate();
  const Index p = y.front().rows();
  MomentUpdate out;
  out.sigma = Matrix::Zero(p, p);
  int total_k = 0;
  for (std::size_t d = 0; d < d_count; ++d) {
    const Matrix& yd = y[d];
    const Vector& t = tau.per_view[d];
    const int kd = k[d];
    if (yd.rows() != p || t.size() != yd.cols() || kd < 0 || kd > yd.cols())
      throw ShapeError("mstep_moments: inconsistent shapes in view " + std::to_string(d));
    Vector mu = Vector::Zero(p);
    if (kd > 0) {
      const auto sig = yd.leftCols(kd);
      const auto ts = t.head(kd);
      mu = sig * ts / ts.sum();
      const Matrix dev = sig.colwise() - mu;
      out.sigma.noalias() += dev * ts.asDiagonal() * dev.transpose();
    }
    out.mu.push_back(mu);
    total_k += kd;
    const Index r = yd.cols() - kd;
    if (r > 0) {
      const Vector sq = yd.rightCols(r).colwise().squaredNorm().transpose();
      out.noise_sigma.push_back(std::sqrt(sq.dot(t.tail(r)) / (static_cast<double>(p) * static_cast<double>(r))));
    } else {
      out.noise_sigma.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  if (total_k == 0) throw ValidationError("mstep_moments: no signal columns");
  out.sigma /= static_cast<double>(total_k);
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose());
  return out;
}

namespace detail {

// Log-likelihood pieces shared by the fit loop and the public evaluators.
struct ViewTerms {
  double log_pdet = 0.0;
  Vector delta;
};

inline Vector signal_noise_delta(const Matrix& y, int k, const Vector& mu, const Matrix& theta, double sigma) {
  Vector delta(y.cols());
  if (k > 0) {
    const Matrix d = y.leftCols(k).colwise() - mu;
    delta.head(k) = d.cwiseProduct(theta * d).colwise().sum().transpose();
  }
  const Index r = y.cols() - k;
  if (r > 0) delta.tail(r) = y.rightCols(r).colwise().squaredNorm().transpose() / (sigma * sigma);
  return delta.cwiseMax(0.0);
}

inline double observed_loglik(const std::vector<ViewTerms>& views, const std::vector<int>& k,
                              const std::vector<double>& sigma, double log_det_theta, double nu, Index p,
                              double jac) {
  double acc = 0.0;
  for (std::size_t d = 0; d < views.size(); ++d) {
    acc += jac * views[d].log_pdet;
    const Vector& delta = views[d].delta;
    const double log_det_noise = 2.0 * static_cast<double>(p) * std::log(sigma[d]);
    for (Index i = 0; i < delta.size(); ++i) {
      const double lds = i < k[d] ? -log_det_theta : log_det_noise;
      acc += tdist::log_density_from_delta(delta(i), nu, p, lds);
    }
  }
  return acc;
}

inline double q_function(const std::vector<ViewTerms>& views, const std::vector<int>& k,
                         const std::vector<double>& sigma, const TauMatrix& tau, double log_det_theta, Index p,
                         double jac) {
  double acc = 0.0;
  for (std::size_t d = 0; d < views.size(); ++d) {
    acc += jac * views[d].log_pdet;
    const Vector& delta = views[d].delta;
    const double half_log_det_noise_inv = -static_cast<double>(p) * std::log(sigma[d]);
    for (Index i = 0; i < delta.size(); ++i) {
      acc += i < k[d] ? 0.5 * log_det_theta : half_log_det_noise_inv;
      acc -= 0.5 * tau.per_view[d](i) * delta(i);
    }
  }
  return acc;
}

inline double prior_term(const Matrix& theta, double lambda, int total_k, bool penalize_diagonal) {
  return -0.5 * static_cast<double>(total_k) * lambda * glasso::l1_norm(theta, penalize_diagonal);
}

[[noreturn]] inline void rethrow_with_stage(const std::string& stage, int iteration) {
  const std::string where = "mvtlasso fit: stage '" + stage + "' at iteration " + std::to_string(iteration) + ": ";
  try {
    throw;
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(where + e.what(), e.last_iterate(), e.gap());
  } catch (const SingularityError& e) {
    throw SingularityError(where + e.what());
  } catch (const NumericError& e) {
    throw NumericError(where + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(where + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(where + e.what());
  } catch (const std::exception& e) {
    throw Error(where + e.what());
  }
}

}  // namespace detail

/// E-step: τ_{d,i} = (ν+p)/(ν+δ) on Y_d = X_d·W_d.
inline TauMatrix estep(const std::vector<ExpressionView>& views, const ModelState& model) {
  if (views.size() != model.views().size()) throw ShapeError("estep: view count mismatch");
  TauMatrix out;
  const Index p = model.genes();
  for (std::size_t d = 0; d < views.size(); ++d) {
    const auto& vp = model.views()[d];
    const Matrix y = unmix(views[d], vp);
    const Vector delta = detail::signal_noise_delta(y, vp.k, vp.mu, model.theta(), vp.sigma);
    Vector t(delta.size());
    for (Index i = 0; i < delta.size(); ++i) t(i) = tdist::tau_posterior_mean(delta(i), model.nu(), p);
    out.per_view.push_back(std::move(t));
  }
  return out;
}

/// M-step for Θ: GLASSO on the pooled scatter.
inline PrecisionEstimate mstep_theta(const Matrix& sigma, double lambda, glasso::GlassoSettings settings = {}) {
  settings.lambda = lambda;
  return glasso::solve(sigma, settings);
}

/// Σ_d [J·ln|det W_d| + Σ_i log t_p(Y_d,i | ν, ρ_d,i, Φ_d,i)] − (K/2)·λ‖Θ‖₁ with K = Σ_d k_d.
inline double penalized_loglik(const std::vector<ExpressionView>& views, const ModelState& model,
                               bool penalize_diagonal = true, std::optional<double> jacobian_exponent = std::nullopt) {
  if (views.size() != model.views().size()) throw ShapeError("penalized_loglik: view count mismatch");
  const Index p = model.genes();
  const double jac = jacobian_exponent ? *jacobian_exponent : static_cast<double>(p);
  std::vector<detail::ViewTerms> terms;
  std::vector<int> k;
  std::vector<double> sig;
  int total_k = 0;
  for (std::size_t d = 0; d < views.size(); ++d) {
    const auto& vp = model.views()[d];
    const Matrix y = unmix(views[d], vp);
    terms.push_back({mvtlasso::detail::log_abs_pseudo_det(vp.W),
                     detail::signal_noise_delta(y, vp.k, vp.mu, model.theta(), vp.sigma)});
    k.push_back(vp.k);
    sig.push_back(vp.sigma);
    total_k += vp.k;
  }
  const double log_det_theta = tlasso::log_det_spd(model.theta());
  return detail::observed_loglik(terms, k, sig, log_det_theta, model.nu(), p, jac) +
         detail::prior_term(model.theta(), model.lambda(), total_k, penalize_diagonal);
}

/// Robust excess kurtosis from octiles (Moors); 0 for a Gaussian.
inline double robust_excess_kurtosis(const Vector& v) {
  std::vector<double> vals(v.data(), v.data() + v.size());
  auto q = [&](double level) {
    auto copy = vals;
    return quantile(copy, level);
  };
  const double e1 = q(0.125), e2 = q(0.25), e3 = q(0.375), e5 = q(0.625), e6 = q(0.75), e7 = q(0.875);
  const double denom = e6 - e2;
  if (!(denom > 0.0)) return 0.0;
  return ((e7 - e5) + (e3 - e1)) / denom - 1.2330951154852172;
}

/// λ-independent part of a fit: rank choice, ICA and signal/noise labelling.
struct ViewInit {
  Matrix base_unmixing;  // U_d, n×m, signal columns first
  Matrix pre_unmixed;    // X_d·U_d
  int k = 1;
  Vector component_kurtosis;
  bool ica_converged = true;
};

struct Initialization {
  std::vector<ViewInit> views;
  double data_scale = 1.0;
  std::vector<std::string> warnings;
};

inline Initialization initialize(const std::vector<ExpressionView>& views, const MvtlassoSettings& settings) {
  require_shared_genes(views);
  if (settings.k_per_view && settings.k_per_view->size() != views.size())
    throw ValidationError("k_per_view must list one rank per view");
  Initialization init;
  const Index p = views.front().genes();

  std::vector<int> ks;
  for (std::size_t d = 0; d < views.size(); ++d) {
    const Index n = views[d].samples();
    int k;
    if (settings.k_per_view) {
      k = (*settings.k_per_view)[d];
      if (k < 1 || k > n)
        throw ValidationError("k for view '" + views[d].view_id() + "' must lie in [1, " + std::to_string(n) + "]");
    } else {
      k = select_rank(views[d], settings.rank_permutations, settings.rank_quantile,
                      settings.seed + static_cast<std::uint64_t>(d));
    }
    ks.push_back(k);
  }

  if (!settings.estimate_unmixing) {
    for (std::size_t d = 0; d < views.size(); ++d) {
      ViewInit vi;
      const Index n = views[d].samples();
      vi.base_unmixing = Matrix::Identity(n, n);
      vi.pre_unmixed = views[d].data();
      vi.k = ks[d];
      init.views.push_back(std::move(vi));
    }
    return init;
  }

  std::vector<ica::IcaResult> icas;
  double energy = 0.0;
  double dims = 0.0;
  for (const auto& v : views) {
    icas.push_back(ica::fastica(v.data(), settings.seed, settings.ica_max_iter, settings.ica_tol));
    const Matrix xc = v.data().rowwise() - v.data().colwise().mean();
    energy += xc.squaredNorm();
    dims += static_cast<double>(icas.back().rank);
  }
  init.data_scale = std::sqrt(energy / (static_cast<double>(p) * dims));

  for (std::size_t d = 0; d < views.size(); ++d) {
    const auto& res = icas[d];
    ViewInit vi;
    vi.ica_converged = res.converged;
    if (!res.converged)
      init.warnings.push_back("view '" + views[d].view_id() + "': ICA did not converge in " +
                              std::to_string(res.iterations) + " iterations");
    const Index m = res.rank;
    int k = ks[d];
    if (k > m) {
      init.warnings.push_back("view '" + views[d].view_id() + "': k reduced from " + std::to_string(k) +
                              " to the column rank " + std::to_string(m));
      k = static_cast<int>(m);
    }
    vi.k = k;
    vi.component_kurtosis.resize(m);
    for (Index c = 0; c < m; ++c) vi.component_kurtosis(c) = robust_excess_kurtosis(res.components.col(c));
    std::vector<Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return vi.component_kurtosis(a) > vi.component_kurtosis(b);
    });
    vi.base_unmixing.resize(res.unmixing.rows(), m);
    for (Index c = 0; c < m; ++c)
      vi.base_unmixing.col(c) = res.unmixing.col(order[static_cast<std::size_t>(c)]) * init.data_scale;
    vi.pre_unmixed = views[d].data() * vi.base_unmixing;
    init.views.push_back(std::move(vi));
  }
  return init;
}

/// Runs the EM from a prepared initialization.
inline FitReport fit(const std::vector<ExpressionView>& views, const Initialization& init,
                     const MvtlassoSettings& settings) {
  if (!(settings.lambda > 0.0)) throw ValidationError("mvtlasso: lambda must be positive");
  if (!(settings.nu > 2.0)) throw ValidationError("mvtlasso: nu must exceed 2");
  if (init.views.size() != views.size()) throw ShapeError("mvtlasso: initialization does not match views");
  const std::size_t d_count = views.size();
  const Index p = views.front().genes();
  const double nu = settings.nu;
  const double jac = detail::jacobian_weight(settings.w_opt, p);
  const bool pen_diag = settings.glasso.penalize_diagonal;

  FitReport report;
  report.warnings = init.warnings;

  std::vector<int> k(d_count);
  std::vector<UnmixingState> unmixing(d_count);
  std::vector<Matrix> y(d_count);
  std::vector<double> log_pdet_base(d_count);
  int total_k = 0;
  for (std::size_t d = 0; d < d_count; ++d) {
    const auto& vi = init.views[d];
    const Index m = vi.pre_unmixed.cols();
    k[d] = vi.k;
    total_k += vi.k;
    unmixing[d] = UnmixingState{Matrix::Identity(m, m), Vector::Ones(m)};
    y[d] = vi.pre_unmixed;
    log_pdet_base[d] = mvtlasso::detail::log_abs_pseudo_det(vi.base_unmixing);
  }

  // Warm start: a few TLASSO iterations on the pooled signal columns.
  Matrix theta;
  glasso::WarmStart glasso_state;
  std::vector<Vector> mu(d_count);
  std::vector<double> sigma(d_count, 1.0);
  int stage_iter = 0;
  try {
    Matrix pooled(p, total_k);
    Index col = 0;
    for (std::size_t d = 0; d < d_count; ++d) {
      pooled.middleCols(col, k[d]) = y[d].leftCols(k[d]);
      col += k[d];
    }
    tlasso::TlassoSettings ts;
    ts.nu = nu;
    ts.lambda = settings.lambda;
    ts.max_em_iter = settings.warm_start_iter;
    ts.glasso = settings.glasso;
    const auto warm = tlasso::tlasso_fit(pooled, ts);
    theta = warm.theta;
    glasso_state = warm.glasso_state;
    col = 0;
    for (std::size_t d = 0; d < d_count; ++d) {
      const Vector t = warm.tau.segment(col, k[d]);
      mu[d] = y[d].leftCols(k[d]) * t / t.sum();
      col += k[d];
      const Index r = y[d].cols() - k[d];
      if (r > 0) sigma[d] = std::sqrt(y[d].rightCols(r).squaredNorm() / (static_cast<double>(p) * static_cast<double>(r)));
      if (!(sigma[d] > 0.0)) sigma[d] = 1.0;
    }
  } catch (...) {
    detail::rethrow_with_stage("warm start", stage_iter);
  }

  auto view_terms = [&](const TauMatrix*) {
    std::vector<detail::ViewTerms> terms(d_count);
    for (std::size_t d = 0; d < d_count; ++d) {
      terms[d].log_pdet = log_pdet_base[d] + unmixing[d].scales.array().log().sum();
      terms[d].delta = detail::signal_noise_delta(y[d], k[d], mu[d], theta, sigma[d]);
    }
    return terms;
  };

  TauMatrix tau;
  std::string stop_reason;
  double prev_loglik = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= settings.max_em_iter; ++it) {
    stage_iter = it;
    std::string stage = "e-step";
    try {
      // E-step.
      {
        const auto terms = view_terms(nullptr);
        tau.per_view.assign(d_count, Vector());
        for (std::size_t d = 0; d < d_count; ++d) {
          tau.per_view[d].resize(terms[d].delta.size());
          for (Index i = 0; i < terms[d].delta.size(); ++i)
            tau.per_view[d](i) = tdist::tau_posterior_mean(terms[d].delta(i), nu, p);
        }
        tau.validate();
        const double ldt = tlasso::log_det_spd(theta);
        report.q_before.push_back(detail::q_function(terms, k, sigma, tau, ldt, p, jac) +
                                  detail::prior_term(theta, settings.lambda, total_k, pen_diag));
      }

      stage = "moments";
      auto mom = mstep_moments(y, k, tau);
      {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(mom.sigma);
        const double scale = mom.sigma.diagonal().mean();
        const double min_eig = eig.eigenvalues().minCoeff();
        if (min_eig < -1e-10 * scale)
          throw NumericError("pooled scatter has eigenvalue " + std::to_string(min_eig) + " below zero");
        if (min_eig < 1e-10 * scale) {
          const Vector clipped = eig.eigenvalues().cwiseMax(1e-10 * scale);
          mom.sigma = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
          mom.sigma = 0.5 * (mom.sigma + mom.sigma.transpose());
          if (min_eig < 0.0)
            report.warnings.push_back("iteration " + std::to_string(it) + ": pooled scatter eigenvalues clipped at " +
                                      std::to_string(1e-10 * scale));
        }
      }
      for (std::size_t d = 0; d < d_count; ++d)
        if (y[d].cols() > k[d] && !(mom.noise_sigma[d] > 0.0))
          throw NumericError("noise scale collapsed to zero in view " + std::to_string(d));

      stage = "glasso";
      std::optional<glasso::Solution> sol;
      {
        auto gs = settings.glasso;
        gs.lambda = settings.lambda;
        try {
          sol = glasso::solve_detailed(mom.sigma, gs, &glasso_state);
        } catch (const NumericError& e) {
          if (it == 1) throw;
          stop_reason = e.what();
        }
      }
      if (!sol) {
        // Keep the last complete iterate; its likelihood is already recorded.
        report.q_before.pop_back();
        report.warnings.push_back("iteration " + std::to_string(it) + ": EM stopped, glasso step failed (" +
                                  stop_reason + ")");
        break;
      }
      for (std::size_t d = 0; d < d_count; ++d) {
        mu[d] = mom.mu[d];
        if (y[d].cols() > k[d]) sigma[d] = mom.noise_sigma[d];
      }
      report.scatter = mom.sigma;
      theta = std::move(sol->estimate.theta);
      glasso_state = std::move(sol->state);

      stage = "unmixing";
      bool all_ok = true;
      if (settings.estimate_unmixing) {
        for (std::size_t d = 0; d < d_count; ++d) {
          const auto res = mstep_W(init.views[d].pre_unmixed, k[d], mu[d], theta, sigma[d], tau.per_view[d],
                                   unmixing[d], settings.w_opt);
          all_ok = all_ok && res.ok;
          unmixing[d] = res.state;
          y[d] = init.views[d].pre_unmixed * unmixing[d].rotation * unmixing[d].scales.asDiagonal();
        }
      }
      report.w_step_ok.push_back(all_ok);

      stage = "likelihood";
      const auto terms = view_terms(&tau);
      const double ldt = tlasso::log_det_spd(theta);
      const double prior = detail::prior_term(theta, settings.lambda, total_k, pen_diag);
      report.q_trace.push_back(detail::q_function(terms, k, sigma, tau, ldt, p, jac) + prior);
      const double ll = detail::observed_loglik(terms, k, sigma, ldt, nu, p, jac) + prior;
      report.loglik_trace.push_back(ll);
      report.iterations = it;
      if (std::isfinite(prev_loglik) && std::abs(ll - prev_loglik) <= settings.em_tol * std::abs(prev_loglik)) {
        report.converged = true;
        break;
      }
      prev_loglik = ll;
    } catch (...) {
      detail::rethrow_with_stage(stage, it);
    }
  }

  std::vector<ViewParams> params(d_count);
  for (std::size_t d = 0; d < d_count; ++d) {
    params[d].W = init.views[d].base_unmixing * unmixing[d].rotation * unmixing[d].scales.asDiagonal();
    params[d].mu = mu[d];
    params[d].sigma = sigma[d];
    params[d].k = k[d];
  }
  report.model = ModelState(std::move(params), theta, nu, settings.lambda);
  report.tau = std::move(tau);
  return report;
}

inline FitReport fit(const std::vector<ExpressionView>& views, const MvtlassoSettings& settings) {
  return fit(views, initialize(views, settings), settings);
}

/// Smallest penalty giving an empty graph, found as a fixed point of
/// λ ↦ λ_max(Σ^(t)(λ)) since the E-step weights depend on the fit.
inline double lambda_max(const std::vector<ExpressionView>& views, const Initialization& init,
                         MvtlassoSettings settings, int rounds = 4) {
  Index total = 0;
  for (const auto& vi : init.views) total += vi.k;
  Matrix pooled(views.front().genes(), total);
  Index col = 0;
  for (const auto& vi : init.views) {
    const Matrix sig = vi.pre_unmixed.leftCols(vi.k);
    pooled.middleCols(col, vi.k) = sig.colwise() - sig.rowwise().mean();
    col += vi.k;
  }
  double lam = glasso::lambda_max(pooled * pooled.transpose() / static_cast<double>(total));
  if (!(lam > 0.0)) throw ValidationError("mvtlasso: signal scatter has no off-diagonal mass");
  settings.max_em_iter = std::min(settings.max_em_iter, 10);
  for (int r = 0; r < rounds; ++r) {
    settings.lambda = lam;
    const double next = glasso::lambda_max(fit(views, init, settings).scatter);
    if (std::abs(next - lam) <= 1e-3 * lam) return std::max(next, lam);
    lam = next;
  }
  return lam;
}

}  // namespace mvtlasso
