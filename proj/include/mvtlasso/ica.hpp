#pragma once

#include "mvtlasso/core.hpp"
#include "mvtlasso/rng.hpp"

#include <cmath>
#include <random>
#include <string>

namespace mvtlasso::ica {

// Columns are the mixtures; rows (genes) are the observations.

struct WhitenResult {
  Matrix whitened;  // p×m, centered (if requested) with XwᵀXw/p = I
  Matrix whitener;  // n×m
  Vector column_means;
  int rank = 0;
  bool reduced_rank = false;
};

struct IcaResult {
  Matrix components;  // X·unmixing
  Matrix unmixing;    // whitener·rotation, n×m
  Matrix whitener;
  Matrix rotation;    // m×m orthogonal
  bool converged = false;
  int iterations = 0;
  int rank = 0;
};

/// Symmetric (1/p-normalized, centered) Gram matrix of the columns.
inline Matrix column_covariance(const Matrix& x) {
  const Matrix xc = x.rowwise() - x.colwise().mean();
  return xc.transpose() * xc / static_cast<double>(x.rows());
}

inline WhitenResult whiten(const Matrix& x, bool center = true) {
  if (x.cols() < 2) throw ValidationError("whiten: need at least 2 columns");
  if (!x.allFinite()) throw ValidationError("whiten: input contains NaN or Inf");
  WhitenResult out;
  out.column_means = center ? Vector(x.colwise().mean().transpose()) : Vector::Zero(x.cols());
  const Matrix xc = x.rowwise() - out.column_means.transpose();
  const Matrix gram = xc.transpose() * xc / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericError("whiten: eigen-decomposition failed");
  const Vector& vals = eig.eigenvalues();  // ascending
  const double top = vals(vals.size() - 1);
  if (!(top > 0.0)) throw ValidationError("whiten: columns carry no variance");
  int rank = 0;
  for (Index i = 0; i < vals.size(); ++i)
    if (vals(i) > 1e-10 * top) ++rank;
  if (rank < 2) throw ValidationError("whiten: column space has rank " + std::to_string(rank) + " < 2");
  out.rank = rank;
  out.reduced_rank = rank < x.cols();
  out.whitener.resize(x.cols(), rank);
  for (int c = 0; c < rank; ++c) {
    const Index src = vals.size() - 1 - c;  // descending variance
    Vector v = eig.eigenvectors().col(src);
    Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.whitener.col(c) = v / std::sqrt(vals(src));
  }
  out.whitened = xc * out.whitener;
  return out;
}

/// R ← R (RᵀR)^{-1/2}.
inline Matrix symmetric_decorrelation(const Matrix& r) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(r.transpose() * r);
  const Vector inv_sqrt = eig.eigenvalues().array().max(1e-300).rsqrt();
  return r * (eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose());
}

/// Symmetric FastICA with the log-cosh contrast (g = tanh).
inline IcaResult fastica(const Matrix& x, std::uint64_t seed, int max_iter = 500, double tol = 1e-6) {
  const WhitenResult w = whiten(x, true);
  const Matrix& z = w.whitened;
  const Index m = w.rank;
  const double inv_p = 1.0 / static_cast<double>(z.rows());

  Philox rng(seed, stream_id(stream_purpose::kIca, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix rot(m, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < m; ++i) rot(i, j) = normal(rng);
  rot = symmetric_decorrelation(rot);

  IcaResult out;
  out.converged = false;
  for (int it = 1; it <= max_iter; ++it) {
    const Matrix proj = z * rot;
    const Matrix g = proj.array().tanh().matrix();
    const Vector mean_dg = (1.0 - g.array().square()).matrix().colwise().mean().transpose();
    Matrix next = z.transpose() * g * inv_p - rot * mean_dg.asDiagonal();
    next = symmetric_decorrelation(next);
    const double lim = ((next.transpose() * rot).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
    rot = std::move(next);
    out.iterations = it;
    if (lim < tol) {
      out.converged = true;
      break;
    }
  }
  out.rotation = rot;
  out.whitener = w.whitener;
  out.unmixing = w.whitener * rot;
  out.components = x * out.unmixing;
  out.rank = static_cast<int>(m);
  return out;
}

}  // namespace mvtlasso::ica
