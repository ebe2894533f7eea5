#pragma once

#include "mvtlasso/core.hpp"
#include "mvtlasso/glasso.hpp"
#include "mvtlasso/ica.hpp"
#include "mvtlasso/mvtlasso.hpp"
#include "mvtlasso/stability.hpp"
#include "mvtlasso/tlasso.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

namespace mvtlasso::methods {

// Every estimator in one place, each as a single-λ fit and as a path over a
// grid given relative to its own λ_max (the smallest λ with an empty graph on
// the scatter that estimator starts from).

enum class Method { Glasso, Tlasso, Mvtlasso, GlassoIca, GlassoStd };

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"glasso", "tlasso", "mvtlasso", "glasso-ica", "glasso-std"};
  return names;
}

inline std::string to_string(Method m) { return method_names()[static_cast<std::size_t>(m)]; }

inline Method parse_method(const std::string& name) {
  const auto& names = method_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw ValidationError("unknown method '" + name + "' (valid: " + list + ")");
  }
  return static_cast<Method>(it - names.begin());
}

struct MethodSettings {
  MvtlassoSettings mvtlasso{};
  tlasso::TlassoSettings tlasso{};
  glasso::GlassoSettings glasso{};
  std::uint64_t seed = 0;  // ICA seed for glasso-ica
};

/// Per-view gene-centered columns of all views side by side.
inline Matrix pooled_columns(const std::vector<Matrix>& blocks) {
  Index total = 0;
  for (const auto& b : blocks) total += b.cols();
  Matrix out(blocks.front().rows(), total);
  Index col = 0;
  for (const auto& b : blocks) {
    out.middleCols(col, b.cols()) = b.colwise() - b.rowwise().mean();
    col += b.cols();
  }
  return out;
}

inline Matrix scatter_of(const Matrix& centered) {
  Matrix s = centered * centered.transpose() / static_cast<double>(centered.cols());
  return 0.5 * (s + s.transpose());
}

/// Standardized views: every gene z-scored across the samples of its view.
inline std::vector<Matrix> standardized_blocks(const std::vector<ExpressionView>& views) {
  std::vector<Matrix> out;
  for (const auto& v : views) {
    Matrix xc = v.data().colwise() - v.data().rowwise().mean();
    const Vector sd = (xc.rowwise().squaredNorm() / static_cast<double>(xc.cols())).cwiseSqrt();
    for (Index i = 0; i < sd.size(); ++i)
      if (!(sd(i) > 0.0))
        throw ValidationError("glasso-std: gene " + v.gene_ids()[static_cast<std::size_t>(i)] + " has zero variance in view '" +
                              v.view_id() + "'");
    out.push_back(sd.cwiseInverse().asDiagonal() * xc);
  }
  return out;
}

/// ICA components of every view, no rank truncation.
inline std::vector<Matrix> ica_blocks(const std::vector<ExpressionView>& views, const MethodSettings& settings) {
  std::vector<Matrix> out;
  for (const auto& v : views)
    out.push_back(ica::fastica(v.data(), settings.seed, settings.mvtlasso.ica_max_iter, settings.mvtlasso.ica_tol).components);
  return out;
}

inline std::vector<Matrix> raw_blocks(const std::vector<ExpressionView>& views) {
  std::vector<Matrix> out;
  for (const auto& v : views) out.push_back(v.data());
  return out;
}

/// Signal columns of the initialization, per view.
inline std::vector<Matrix> signal_blocks(const Initialization& init) {
  std::vector<Matrix> out;
  for (const auto& vi : init.views) out.push_back(vi.pre_unmixed.leftCols(vi.k));
  return out;
}

namespace detail {

inline std::vector<double> scaled_grid(double top, const std::vector<double>& relative) {
  if (!(top > 0.0)) throw ValidationError("scatter has no off-diagonal mass; lambda grid is empty");
  std::vector<double> out;
  for (double r : relative) out.push_back(r * top);
  return out;
}

inline std::vector<double> absolute_grid(const Matrix& s, const std::vector<double>& relative) {
  return scaled_grid(glasso::lambda_max(s), relative);
}

inline std::vector<std::size_t> descending_order(const std::vector<double>& lambdas) {
  std::vector<std::size_t> order(lambdas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return lambdas[a] > lambdas[b]; });
  return order;
}

inline std::vector<PrecisionEstimate> tlasso_path(const Matrix& pooled, const std::vector<double>& lambdas,
                                                  tlasso::TlassoSettings settings) {
  std::vector<PrecisionEstimate> out(lambdas.size());
  std::optional<tlasso::TlassoState> warm;
  for (auto idx : descending_order(lambdas)) {
    settings.lambda = lambdas[idx];
    auto st = tlasso::tlasso_fit(pooled, settings, warm);
    out[idx] = PrecisionEstimate::from_theta(st.theta, lambdas[idx]);
    warm = std::move(st);
  }
  return out;
}

inline std::vector<PrecisionEstimate> mvtlasso_path(const std::vector<ExpressionView>& views,
                                                    const Initialization& init, const std::vector<double>& lambdas,
                                                    MvtlassoSettings settings) {
  std::vector<PrecisionEstimate> out(lambdas.size());
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    settings.lambda = lambdas[i];
    const auto rep = fit(views, init, settings);
    out[i] = PrecisionEstimate::from_theta(rep.model.theta(), lambdas[i]);
  }
  return out;
}

}  // namespace detail

/// Fits `method` along absolute penalties `lambdas`.
inline std::vector<PrecisionEstimate> fit_path(Method method, const std::vector<ExpressionView>& views,
                                               const std::vector<double>& lambdas, const MethodSettings& settings) {
  require_shared_genes(views);
  switch (method) {
    case Method::Glasso:
      return glasso::solve_path(scatter_of(pooled_columns(raw_blocks(views))), lambdas, settings.glasso);
    case Method::GlassoStd:
      return glasso::solve_path(scatter_of(pooled_columns(standardized_blocks(views))), lambdas, settings.glasso);
    case Method::GlassoIca:
      return glasso::solve_path(scatter_of(pooled_columns(ica_blocks(views, settings))), lambdas, settings.glasso);
    case Method::Tlasso: {
      auto ts = settings.tlasso;
      ts.glasso = settings.glasso;
      return detail::tlasso_path(pooled_columns(raw_blocks(views)), lambdas, ts);
    }
    case Method::Mvtlasso:
      return detail::mvtlasso_path(views, initialize(views, settings.mvtlasso), lambdas, settings.mvtlasso);
  }
  throw ValidationError("unknown method");
}

inline PrecisionEstimate fit_one(Method method, const std::vector<ExpressionView>& views, double lambda,
                                 const MethodSettings& settings) {
  return fit_path(method, views, {lambda}, settings).front();
}

struct RelativePath {
  std::vector<double> lambdas;  // absolute, same order as the relative grid
  std::vector<PrecisionEstimate> estimates;
};

/// Fits along fractions of the method's own λ_max.
inline RelativePath fit_relative_path(Method method, const std::vector<ExpressionView>& views,
                                      const std::vector<double>& relative, const MethodSettings& settings) {
  require_shared_genes(views);
  RelativePath out;
  switch (method) {
    case Method::Glasso: {
      const Matrix s = scatter_of(pooled_columns(raw_blocks(views)));
      out.lambdas = detail::absolute_grid(s, relative);
      out.estimates = glasso::solve_path(s, out.lambdas, settings.glasso);
      return out;
    }
    case Method::Tlasso: {
      const Matrix pooled = pooled_columns(raw_blocks(views));
      auto ts = settings.tlasso;
      ts.glasso = settings.glasso;
      out.lambdas = detail::scaled_grid(tlasso::lambda_max(pooled, ts), relative);
      out.estimates = detail::tlasso_path(pooled, out.lambdas, ts);
      return out;
    }
    case Method::GlassoStd:
    case Method::GlassoIca: {
      const Matrix s = scatter_of(pooled_columns(method == Method::GlassoStd ? standardized_blocks(views)
                                                                              : ica_blocks(views, settings)));
      out.lambdas = detail::absolute_grid(s, relative);
      out.estimates = glasso::solve_path(s, out.lambdas, settings.glasso);
      return out;
    }
    case Method::Mvtlasso: {
      const auto init = initialize(views, settings.mvtlasso);
      out.lambdas = detail::scaled_grid(lambda_max(views, init, settings.mvtlasso), relative);
      out.estimates = detail::mvtlasso_path(views, init, out.lambdas, settings.mvtlasso);
      return out;
    }
  }
  throw ValidationError("unknown method");
}

}  // namespace mvtlasso::methods
