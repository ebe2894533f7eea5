#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mvtlasso {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Error hierarchy. The CLI maps ValidationError/ShapeError to exit code 2 and
// the numerical family to exit code 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct ShapeError : ValidationError {
  using ValidationError::ValidationError;
};
struct NumericError : Error {
  using Error::Error;
};
struct SingularityError : NumericError {
  using NumericError::NumericError;
};

/// Raised by iterative solvers that exhaust their iteration budget. Carries
/// the last iterate and the optimality gap at that point.
class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& what, Matrix last_iterate, double gap)
      : NumericError(what), last_iterate_(std::move(last_iterate)), gap_(gap) {}
  const Matrix& last_iterate() const noexcept { return last_iterate_; }
  double gap() const noexcept { return gap_; }

 private:
  Matrix last_iterate_;
  double gap_;
};

namespace detail {

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

inline double max_abs_asymmetry(const Matrix& m) {
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

// Natural log of |det| for a square matrix, or half the log-determinant of
// WᵀW (sum of log singular values) for a tall one.
inline double log_abs_pseudo_det(const Matrix& w) {
  if (w.rows() == w.cols()) {
    Eigen::PartialPivLU<Matrix> lu(w);
    const Matrix& packed = lu.matrixLU();
    double acc = 0.0;
    for (Index i = 0; i < packed.rows(); ++i) acc += std::log(std::abs(packed(i, i)));
    return acc;
  }
  Eigen::JacobiSVD<Matrix> svd(w);
  return svd.singularValues().array().log().sum();
}

}  // namespace detail

/// Unordered gene pair with i < j.
struct Edge {
  int i = 0;
  int j = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

using EdgeSet = std::vector<Edge>;  // sorted, unique

inline Edge make_edge(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

inline void normalize(EdgeSet& edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

/// One observed p×n expression matrix with gene and sample identifiers.
class ExpressionView {
 public:
  ExpressionView() = default;
  ExpressionView(std::string view_id, std::vector<std::string> gene_ids,
                 std::vector<std::string> sample_ids, Matrix data)
      : view_id_(std::move(view_id)),
        gene_ids_(std::move(gene_ids)),
        sample_ids_(std::move(sample_ids)),
        data_(std::move(data)) {
    if (data_.rows() < 2) throw ValidationError("view '" + view_id_ + "': need at least 2 genes");
    if (data_.cols() < 2) throw ValidationError("view '" + view_id_ + "': need at least 2 samples");
    if (static_cast<Index>(gene_ids_.size()) != data_.rows())
      throw ShapeError("view '" + view_id_ + "': gene_ids size does not match data rows");
    if (static_cast<Index>(sample_ids_.size()) != data_.cols())
      throw ShapeError("view '" + view_id_ + "': sample_ids size does not match data columns");
    if (!detail::all_finite(data_))
      throw ValidationError("view '" + view_id_ + "': data contains NaN or Inf");
  }

  /// Convenience constructor with generated identifiers.
  static ExpressionView anonymous(std::string view_id, Matrix data) {
    std::vector<std::string> genes, samples;
    for (Index i = 0; i < data.rows(); ++i) genes.push_back("g" + std::to_string(i + 1));
    for (Index j = 0; j < data.cols(); ++j) samples.push_back(view_id + "_s" + std::to_string(j + 1));
    return ExpressionView(std::move(view_id), std::move(genes), std::move(samples), std::move(data));
  }

  const std::string& view_id() const noexcept { return view_id_; }
  const std::vector<std::string>& gene_ids() const noexcept { return gene_ids_; }
  const std::vector<std::string>& sample_ids() const noexcept { return sample_ids_; }
  const Matrix& data() const noexcept { return data_; }
  Index genes() const noexcept { return data_.rows(); }
  Index samples() const noexcept { return data_.cols(); }

  ExpressionView select_samples(const std::vector<Index>& columns) const {
    Matrix sub(data_.rows(), static_cast<Index>(columns.size()));
    std::vector<std::string> ids;
    ids.reserve(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
      sub.col(static_cast<Index>(c)) = data_.col(columns[c]);
      ids.push_back(sample_ids_[static_cast<std::size_t>(columns[c])]);
    }
    return ExpressionView(view_id_, gene_ids_, std::move(ids), std::move(sub));
  }

 private:
  std::string view_id_;
  std::vector<std::string> gene_ids_;
  std::vector<std::string> sample_ids_;
  Matrix data_;
};

/// Checks that every view shares the first view's gene axis in order.
inline void require_shared_genes(const std::vector<ExpressionView>& views) {
  if (views.empty()) throw ValidationError("at least one view is required");
  for (const auto& v : views)
    if (v.gene_ids() != views.front().gene_ids())
      throw ShapeError("view '" + v.view_id() + "' gene axis differs from view '" +
                       views.front().view_id() + "'");
}

/// Per-view unmixing parameters. W has n_d rows and k + r columns; it is
/// square whenever the view's sample space is fully identified (p > n_d).
struct ViewParams {
  Matrix W;
  Vector mu;
  double sigma = 1.0;
  int k = 1;

  int r() const noexcept { return static_cast<int>(W.cols()) - k; }

  void validate(Index p) const {
    if (W.rows() < W.cols()) throw ShapeError("W must have at least as many rows as columns");
    if (mu.size() != p) throw ShapeError("mu length must equal gene count");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be positive");
    if (k < 1 || k > W.cols()) throw ValidationError("signal rank k out of range");
  }
};

/// Complete EM parameter set. Sigma is always the inverse of Theta.
class ModelState {
 public:
  ModelState() = default;
  ModelState(std::vector<ViewParams> views, Matrix theta, double nu, double lambda)
      : views_(std::move(views)), theta_(std::move(theta)), nu_(nu), lambda_(lambda) {
    if (theta_.rows() != theta_.cols()) throw ShapeError("Theta must be square");
    if (!(nu_ > 2.0)) throw ValidationError("nu must exceed 2");
    if (!(lambda_ > 0.0)) throw ValidationError("lambda must be positive");
    if (detail::max_abs_asymmetry(theta_) > 1e-10 * std::max(1.0, theta_.cwiseAbs().maxCoeff()))
      throw ValidationError("Theta must be symmetric");
    theta_ = 0.5 * (theta_ + theta_.transpose());
    Eigen::LLT<Matrix> llt(theta_);
    if (llt.info() != Eigen::Success) throw NumericError("Theta is not positive definite");
    const Index p = theta_.rows();
    sigma_ = llt.solve(Matrix::Identity(p, p));
    sigma_ = 0.5 * (sigma_ + sigma_.transpose());
    const double resid = (sigma_ * theta_ - Matrix::Identity(p, p)).cwiseAbs().maxCoeff();
    if (resid > 1e-8) throw NumericError("Theta too ill-conditioned: |Sigma*Theta - I| = " + std::to_string(resid));
    for (const auto& v : views_) v.validate(p);
  }

  const std::vector<ViewParams>& views() const noexcept { return views_; }
  const Matrix& theta() const noexcept { return theta_; }
  const Matrix& sigma() const noexcept { return sigma_; }
  double nu() const noexcept { return nu_; }
  double lambda() const noexcept { return lambda_; }
  Index genes() const noexcept { return theta_.rows(); }

 private:
  std::vector<ViewParams> views_;
  Matrix theta_;
  Matrix sigma_;
  double nu_ = 3.0;
  double lambda_ = 1.0;
};

/// E-step output: one vector of column weights per view.
struct TauMatrix {
  std::vector<Vector> per_view;

  void validate() const {
    for (const auto& t : per_view)
      if (!t.allFinite() || (t.array() <= 0.0).any())
        throw NumericError("tau entries must be positive and finite");
  }
};

/// Relative threshold below which an off-diagonal precision entry is zero.
inline constexpr double kEdgeEpsilon = 1e-6;

inline EdgeSet extract_edges(const Matrix& theta, double eps_rel = kEdgeEpsilon) {
  const double scale = theta.cwiseAbs().maxCoeff();
  const double cut = eps_rel * scale;
  EdgeSet edges;
  for (Index i = 0; i < theta.rows(); ++i)
    for (Index j = i + 1; j < theta.cols(); ++j)
      if (std::abs(theta(i, j)) > cut || std::abs(theta(j, i)) > cut)
        edges.push_back(Edge{static_cast<int>(i), static_cast<int>(j)});
  return edges;
}

struct PrecisionEstimate {
  Matrix theta;
  EdgeSet edges;
  double lambda = 0.0;

  static PrecisionEstimate from_theta(Matrix theta, double lambda) {
    PrecisionEstimate out;
    out.edges = extract_edges(theta);
    out.theta = std::move(theta);
    out.lambda = lambda;
    return out;
  }
};

struct SelectionProbabilityMatrix {
  Matrix pi;
  double lambda = 0.0;
  int n_replicates = 0;
};

/// Y = X·W. Columns 1..k are signal estimates, the rest noise estimates.
inline Matrix unmix(const Matrix& x, const Matrix& w) {
  if (x.cols() != w.rows())
    throw ShapeError("unmix: X has " + std::to_string(x.cols()) + " columns but W has " +
                     std::to_string(w.rows()) + " rows");
  if (w.cols() > w.rows()) throw ShapeError("unmix: W has more columns than rows");
  Matrix scaled = w;
  for (Index i = 0; i < scaled.rows(); ++i) {
    const double m = scaled.row(i).cwiseAbs().maxCoeff();
    if (m > 0.0) scaled.row(i) /= m;
  }
  double det = 0.0;
  if (scaled.rows() == scaled.cols()) {
    det = std::abs(scaled.determinant());
  } else {
    Eigen::JacobiSVD<Matrix> svd(scaled);
    det = svd.singularValues().prod();
  }
  if (!(det >= 1e-12)) throw SingularityError("unmix: W is singular");
  return x * w;
}

inline Matrix unmix(const ExpressionView& view, const ViewParams& params) {
  return unmix(view.data(), params.W);
}

/// (y−ρ)ᵀ Φ⁻¹ (y−ρ).
inline double mahalanobis_delta(const Vector& y, const Vector& rho, const Matrix& phi_inv) {
  if (y.size() != rho.size() || phi_inv.rows() != y.size() || phi_inv.cols() != y.size())
    throw ShapeError("mahalanobis_delta: dimension mismatch");
  const Vector d = y - rho;
  const double r = d.dot(phi_inv * d);
  if (r < -1e-10) throw NumericError("mahalanobis_delta: Phi_inv is not positive definite");
  return std::max(r, 0.0);
}

}  // namespace mvtlasso
