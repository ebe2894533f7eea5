#pragma once

#include "mvtlasso/core.hpp"
#include "mvtlasso/rng.hpp"
#include "mvtlasso/tdist.hpp"

#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mvtlasso::synth {

struct SynthSpec {
  int p = 50;
  int n = 60;
  int k = 30;
  int r = 30;
  int D = 2;
  double nu = 3.0;
  double edge_prob = 0.01;  // per sign
  std::uint64_t seed = 0;
  std::optional<Vector> mu;  // unset: zero
  double sigma = 1.0;
  double signal_scale = 1.0;  // multiplies S_d; used by scale-recovery checks

  void validate() const {
    if (p < 2) throw ValidationError("synth: p must be at least 2");
    if (n < 1) throw ValidationError("synth: n must be at least 1");
    if (D < 1) throw ValidationError("synth: D must be at least 1");
    if (k < 1 || k > n) throw ValidationError("synth: k must lie in [1, n] (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    if (r < 0 || k + r != n) throw ValidationError("synth: k + r must equal n");
    if (!(nu > 0.0)) throw ValidationError("synth: nu must be positive");
    if (!(edge_prob >= 0.0 && edge_prob < 0.5)) throw ValidationError("synth: edge_prob must lie in [0, 0.5)");
    if (!(sigma > 0.0)) throw ValidationError("synth: sigma must be positive");
    if (!(signal_scale > 0.0)) throw ValidationError("synth: signal_scale must be positive");
    if (mu && mu->size() != p) throw ShapeError("synth: mu length must equal p");
  }
};

struct ThetaTruth {
  Matrix theta;
  EdgeSet edges;
};

struct ViewTruth {
  Matrix S;  // p×k
  Matrix Z;  // p×r
  Matrix A;  // k×n
  Matrix B;  // r×n
};

struct Dataset {
  std::vector<ExpressionView> views;
  std::vector<ViewTruth> truth;
  ThetaTruth theta;
};

/// Off-diagonal entries from {−1, 0, +1} with probabilities
/// {edge_prob, 1−2·edge_prob, edge_prob} on the upper triangle, mirrored;
/// Θ_ii = 1 + degree(i), so Θ is strictly diagonally dominant.
inline ThetaTruth gen_theta(int p, double edge_prob, std::uint64_t seed) {
  if (p < 2) throw ValidationError("gen_theta: p must be at least 2");
  if (!(edge_prob >= 0.0 && edge_prob < 0.5)) throw ValidationError("gen_theta: edge_prob must lie in [0, 0.5)");
  ThetaTruth out;
  out.theta = Matrix::Zero(p, p);
  Philox rng(seed, stream_id(stream_purpose::kTheta, 0));
  for (int j = 1; j < p; ++j) {
    for (int i = 0; i < j; ++i) {
      const double u = rng.uniform();
      double v = 0.0;
      if (u < edge_prob)
        v = -1.0;
      else if (u >= 1.0 - edge_prob)
        v = 1.0;
      if (v != 0.0) {
        out.theta(i, j) = v;
        out.theta(j, i) = v;
        out.edges.push_back(Edge{i, j});
      }
    }
  }
  normalize(out.edges);
  for (int i = 0; i < p; ++i) {
    double degree = 0.0;
    for (int j = 0; j < p; ++j)
      if (j != i && out.theta(i, j) != 0.0) degree += 1.0;
    out.theta(i, i) = 1.0 + degree;
  }
  return out;
}

inline std::vector<std::string> gene_ids(int p) {
  const int width = p < 1000 ? 3 : static_cast<int>(std::to_string(p).size());
  std::vector<std::string> ids;
  for (int i = 1; i <= p; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "g%0*d", width, i);
    ids.emplace_back(buf);
  }
  return ids;
}

namespace detail {

inline Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t seed, std::uint64_t stream) {
  Philox rng(seed, stream);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

inline double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  const double lo = s(s.size() - 1);
  return lo > 0.0 ? s(0) / lo : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// X_d = S_d·A_d + Z_d·B_d with t-distributed loadings and Gaussian mixing.
inline Dataset gen_views(const SynthSpec& spec, const ThetaTruth& theta) {
  spec.validate();
  if (theta.theta.rows() != spec.p || theta.theta.cols() != spec.p) throw ShapeError("gen_views: Theta must be p×p");
  Eigen::LLT<Matrix> llt(theta.theta);
  if (llt.info() != Eigen::Success) throw NumericError("gen_views: Theta is not positive definite");
  const Matrix dispersion = llt.solve(Matrix::Identity(spec.p, spec.p));
  const Vector mu = spec.mu ? *spec.mu : Vector::Zero(spec.p);
  const tdist::MvtParams signal(spec.nu, mu, 0.5 * (dispersion + dispersion.transpose()));
  const tdist::MvtParams noise(spec.nu, Vector::Zero(spec.p),
                               spec.sigma * spec.sigma * Matrix::Identity(spec.p, spec.p));
  const auto genes = gene_ids(spec.p);

  Dataset out;
  out.theta = theta;
  for (int d = 0; d < spec.D; ++d) {
    const auto vd = static_cast<std::uint32_t>(d);
    ViewTruth vt;
    vt.S = spec.signal_scale * tdist::sample(signal, spec.k, spec.seed, stream_id(stream_purpose::kSignal, vd));
    if (spec.r > 0)
      vt.Z = tdist::sample(noise, spec.r, spec.seed, stream_id(stream_purpose::kNoise, vd));
    else
      vt.Z = Matrix::Zero(spec.p, 0);
    Matrix stacked;
    bool ok = false;
    for (std::uint32_t attempt = 0; attempt <= 10; ++attempt) {
      stacked = detail::gaussian_matrix(spec.n, spec.n, spec.seed, stream_id(stream_purpose::kMixing, vd, attempt));
      if (detail::condition_number(stacked) < 1e8) {
        ok = true;
        break;
      }
    }
    if (!ok) throw NumericError("gen_views: mixing matrix of view " + std::to_string(d + 1) + " stayed ill-conditioned after 10 redraws");
    vt.A = stacked.topRows(spec.k);
    vt.B = stacked.bottomRows(spec.r);
    Matrix x = vt.S * vt.A;
    if (spec.r > 0) x += vt.Z * vt.B;
    const std::string vid = "view_" + std::to_string(d + 1);
    std::vector<std::string> samples;
    for (int j = 1; j <= spec.n; ++j) samples.push_back(vid + "_s" + std::to_string(j));
    out.views.emplace_back(vid, genes, std::move(samples), std::move(x));
    out.truth.push_back(std::move(vt));
  }
  return out;
}

inline Dataset generate(const SynthSpec& spec) {
  spec.validate();
  return gen_views(spec, gen_theta(spec.p, spec.edge_prob, spec.seed));
}

}  // namespace mvtlasso::synth
