#pragma once

#include "mvtlasso/core.hpp"
#include "mvtlasso/glasso.hpp"
#include "mvtlasso/parallel.hpp"
#include "mvtlasso/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace mvtlasso {

/// `count` values from hi down to hi/ratio, evenly spaced in log.
inline std::vector<double> log_grid(double hi, double ratio, int count) {
  if (!(hi > 0.0) || !(ratio >= 1.0) || count < 1) throw ValidationError("log_grid: need hi > 0, ratio >= 1, count >= 1");
  std::vector<double> out;
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    out.push_back(hi * std::pow(ratio, -t));
  }
  return out;
}

/// Scatter of all views' columns after centering each gene within each view.
inline Matrix pooled_scatter(const std::vector<ExpressionView>& views) {
  require_shared_genes(views);
  const Index p = views.front().genes();
  Matrix s = Matrix::Zero(p, p);
  Index total = 0;
  for (const auto& v : views) {
    const Matrix xc = v.data().colwise() - v.data().rowwise().mean();
    s.noalias() += xc * xc.transpose();
    total += v.samples();
  }
  s /= static_cast<double>(total);
  return 0.5 * (s + s.transpose());
}

namespace stability {

struct StabilitySpec {
  std::vector<double> lambdas;  // empty: 15 log-spaced values below λ_max of the pooled scatter
  int n_replicates = 100;
  double subsample_fraction = 0.9;
  double threshold = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_replicates < 1) throw ValidationError("stability: n_replicates must be positive");
    if (!(subsample_fraction > 0.0 && subsample_fraction < 1.0))
      throw ValidationError("stability: subsample_fraction must lie in (0, 1)");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("stability: threshold must lie in (0, 1)");
    for (double l : lambdas)
      if (!(l > 0.0)) throw ValidationError("stability: lambdas must be positive");
  }
};

struct LambdaResult {
  SelectionProbabilityMatrix pi;
  EdgeSet selected;
  int failures = 0;
  bool valid = true;
  std::vector<std::string> failure_messages;
};

inline std::vector<double> default_lambdas(const std::vector<ExpressionView>& views, int count = 15) {
  const double top = glasso::lambda_max(pooled_scatter(views));
  if (!(top > 0.0)) throw ValidationError("stability: pooled scatter has no off-diagonal mass");
  return log_grid(top, 100.0, count);
}

/// Column subsets of every view for one replicate. The stream depends on the
/// replicate and view only, so all λ values see the same subsamples.
inline std::vector<std::vector<Index>> subsample_columns(const std::vector<ExpressionView>& views, double fraction,
                                                        std::uint64_t seed, int replicate) {
  std::vector<std::vector<Index>> out;
  for (std::size_t d = 0; d < views.size(); ++d) {
    const Index n = views[d].samples();
    const auto m = static_cast<Index>(std::floor(fraction * static_cast<double>(n)));
    if (m < 2)
      throw ValidationError("stability: view '" + views[d].view_id() + "' keeps fewer than 2 samples after subsampling");
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    Philox rng(seed, stream_id(stream_purpose::kSubsample, static_cast<std::uint32_t>(replicate),
                               static_cast<std::uint32_t>(d)));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(m));
    std::sort(idx.begin(), idx.end());
    out.push_back(std::move(idx));
  }
  return out;
}

/// Edges with selection probability strictly above the threshold.
inline EdgeSet select(const Matrix& pi, double threshold) {
  EdgeSet out;
  for (Index i = 0; i < pi.rows(); ++i)
    for (Index j = i + 1; j < pi.cols(); ++j)
      if (pi(i, j) > threshold) out.push_back(Edge{static_cast<int>(i), static_cast<int>(j)});
  return out;
}

/// estimator(views, λ) → PrecisionEstimate. Results follow spec.lambdas order.
template <class Estimator>
std::vector<LambdaResult> run(const std::vector<ExpressionView>& views, Estimator&& estimator,
                              const StabilitySpec& spec, int threads = 1) {
  spec.validate();
  require_shared_genes(views);
  const std::vector<double> lambdas = spec.lambdas.empty() ? default_lambdas(views) : spec.lambdas;
  const Index p = views.front().genes();
  const auto n_rep = static_cast<std::size_t>(spec.n_replicates);

  std::vector<std::vector<ExpressionView>> replicas(n_rep);
  for (std::size_t b = 0; b < n_rep; ++b) {
    const auto cols = subsample_columns(views, spec.subsample_fraction, spec.seed, static_cast<int>(b));
    for (std::size_t d = 0; d < views.size(); ++d) replicas[b].push_back(views[d].select_samples(cols[d]));
  }

  struct Outcome {
    std::optional<EdgeSet> edges;
    std::string error;
  };
  std::vector<Outcome> outcomes(lambdas.size() * n_rep);
  parallel_for(outcomes.size(), threads, [&](std::size_t task) {
    const std::size_t li = task / n_rep;
    const std::size_t b = task % n_rep;
    try {
      outcomes[task].edges = estimator(replicas[b], lambdas[li]).edges;
    } catch (const Error& e) {
      outcomes[task].error = e.what();
    }
  });

  std::vector<LambdaResult> out;
  for (std::size_t li = 0; li < lambdas.size(); ++li) {
    LambdaResult res;
    Matrix counts = Matrix::Zero(p, p);
    for (std::size_t b = 0; b < n_rep; ++b) {
      const auto& oc = outcomes[li * n_rep + b];
      if (!oc.edges) {
        ++res.failures;
        res.failure_messages.push_back(oc.error);
        continue;
      }
      for (const auto& e : *oc.edges) {
        counts(e.i, e.j) += 1.0;
        counts(e.j, e.i) += 1.0;
      }
    }
    res.pi.pi = counts / static_cast<double>(spec.n_replicates);
    res.pi.lambda = lambdas[li];
    res.pi.n_replicates = spec.n_replicates;
    res.valid = static_cast<double>(res.failures) <= 0.2 * static_cast<double>(spec.n_replicates);
    res.selected = select(res.pi.pi, spec.threshold);
    out.push_back(std::move(res));
  }
  return out;
}

/// Union of the selected sets over all valid λ values.
inline EdgeSet union_selected(const std::vector<LambdaResult>& results) {
  EdgeSet out;
  for (const auto& r : results)
    if (r.valid) out.insert(out.end(), r.selected.begin(), r.selected.end());
  normalize(out);
  return out;
}

}  // namespace stability
}  // namespace mvtlasso
