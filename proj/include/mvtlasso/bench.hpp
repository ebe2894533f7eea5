#pragma once

#include "mvtlasso/core.hpp"
#include "mvtlasso/methods.hpp"
#include "mvtlasso/parallel.hpp"
#include "mvtlasso/stability.hpp"
#include "mvtlasso/synth.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace mvtlasso::bench {

struct Confusion {
  long long tp = 0, fp = 0, fn = 0, tn = 0;

  double tpr() const { return tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }
  double fpr() const { return fp + tn > 0 ? static_cast<double>(fp) / static_cast<double>(fp + tn) : 0.0; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Counts over all p(p−1)/2 unordered pairs.
inline Confusion confusion(EdgeSet est, EdgeSet truth, int p) {
  auto check = [p](const EdgeSet& s, const char* what) {
    for (const auto& e : s) {
      if (e.i == e.j) throw ValidationError(std::string("confusion: self-loop in ") + what);
      if (e.i < 0 || e.j < 0 || e.i >= p || e.j >= p) throw ValidationError(std::string("confusion: index out of range in ") + what);
    }
  };
  check(est, "estimate");
  check(truth, "truth");
  for (auto* s : {&est, &truth}) {
    for (auto& e : *s) e = make_edge(e.i, e.j);
    normalize(*s);
  }
  EdgeSet common;
  std::set_intersection(est.begin(), est.end(), truth.begin(), truth.end(), std::back_inserter(common));
  Confusion c;
  const long long pairs = static_cast<long long>(p) * (p - 1) / 2;
  c.tp = static_cast<long long>(common.size());
  c.fp = static_cast<long long>(est.size()) - c.tp;
  c.fn = static_cast<long long>(truth.size()) - c.tp;
  c.tn = pairs - c.tp - c.fp - c.fn;
  return c;
}

struct RocPoint {
  double lambda = 0.0;  // relative to the method's λ_max
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::string method;
  std::vector<RocPoint> points;  // λ descending
  double auc = 0.0;
  int n_seeds = 0;
  int dropped = 0;
  bool valid = true;
  std::vector<std::string> failures;
};

/// Trapezoid area under the points, extended with (0,0) and (1,1).
inline double auc(std::vector<RocPoint> points) {
  points.push_back({0.0, 0.0, 0.0});
  points.push_back({0.0, 1.0, 1.0});
  std::stable_sort(points.begin(), points.end(),
                   [](const RocPoint& a, const RocPoint& b) { return a.fpr < b.fpr || (a.fpr == b.fpr && a.tpr < b.tpr); });
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].fpr - points[i - 1].fpr) * 0.5 * (points[i].tpr + points[i - 1].tpr);
  return area;
}

/// One problem instance with known structure.
struct Bundle {
  std::vector<ExpressionView> views;
  EdgeSet truth;
  int p = 0;
};

inline std::vector<double> default_relative_grid(int count = 50) { return log_grid(1.0, 1000.0, count); }

/// path(bundle) returns one edge set per grid point (λ descending). Failing
/// seeds are dropped; the curve is invalid when more than 10% drop.
template <class Path>
RocCurve roc_sweep(const std::string& method, const std::vector<Bundle>& data, const std::vector<double>& relative,
                   Path&& path, int threads = 1) {
  if (relative.empty()) throw ValidationError("roc_sweep: lambda grid is empty");
  if (data.empty()) throw ValidationError("roc_sweep: no seeds");
  std::vector<std::optional<std::vector<Confusion>>> per_seed(data.size());
  std::vector<std::string> errors(data.size());
  parallel_for(data.size(), threads, [&](std::size_t s) {
    try {
      const std::vector<EdgeSet> edges = path(data[s]);
      if (edges.size() != relative.size()) throw ShapeError("roc_sweep: path returned the wrong number of edge sets");
      std::vector<Confusion> cs;
      for (const auto& e : edges) cs.push_back(confusion(e, data[s].truth, data[s].p));
      per_seed[s] = std::move(cs);
    } catch (const Error& e) {
      errors[s] = e.what();
    }
  });

  RocCurve curve;
  curve.method = method;
  std::vector<double> fpr(relative.size(), 0.0), tpr(relative.size(), 0.0);
  for (std::size_t s = 0; s < data.size(); ++s) {
    if (!per_seed[s]) {
      ++curve.dropped;
      curve.failures.push_back("seed " + std::to_string(s) + ": " + errors[s]);
      continue;
    }
    ++curve.n_seeds;
    for (std::size_t l = 0; l < relative.size(); ++l) {
      fpr[l] += (*per_seed[s])[l].fpr();
      tpr[l] += (*per_seed[s])[l].tpr();
    }
  }
  curve.valid = curve.n_seeds > 0 && static_cast<double>(curve.dropped) <= 0.1 * static_cast<double>(data.size());
  if (curve.n_seeds == 0) return curve;
  for (std::size_t l = 0; l < relative.size(); ++l)
    curve.points.push_back({relative[l], fpr[l] / curve.n_seeds, tpr[l] / curve.n_seeds});
  std::stable_sort(curve.points.begin(), curve.points.end(),
                   [](const RocPoint& a, const RocPoint& b) { return a.lambda > b.lambda; });
  curve.auc = auc(curve.points);
  return curve;
}

struct BenchSettings {
  std::vector<double> relative_lambdas = default_relative_grid();
  std::vector<std::uint64_t> seeds;
  methods::MethodSettings method_settings{};
  int threads = 1;
};

inline std::vector<std::uint64_t> seed_range(std::uint64_t first, int count) {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < count; ++i) out.push_back(first + static_cast<std::uint64_t>(i));
  return out;
}

inline Bundle make_bundle(synth::SynthSpec spec, std::uint64_t seed) {
  spec.seed = seed;
  auto data = synth::generate(spec);
  return Bundle{std::move(data.views), std::move(data.theta.edges), spec.p};
}

/// Path function for a named method on synthetic bundles.
inline auto method_path(methods::Method method, const std::vector<double>& relative,
                        const methods::MethodSettings& settings) {
  return [=](const Bundle& b) {
    const auto res = methods::fit_relative_path(method, b.views, relative, settings);
    std::vector<EdgeSet> out;
    for (const auto& e : res.estimates) out.push_back(e.edges);
    return out;
  };
}

/// Every method on the same data per seed. One row per method, in order.
inline std::vector<RocCurve> compare_methods(const synth::SynthSpec& spec, const std::vector<methods::Method>& list,
                                             const BenchSettings& settings) {
  spec.validate();
  if (settings.seeds.empty()) throw ValidationError("compare_methods: no seeds");
  std::vector<Bundle> data(settings.seeds.size());
  parallel_for(data.size(), settings.threads, [&](std::size_t s) { data[s] = make_bundle(spec, settings.seeds[s]); });
  std::vector<RocCurve> out;
  for (auto m : list) {
    try {
      out.push_back(roc_sweep(methods::to_string(m), data, settings.relative_lambdas,
                              method_path(m, settings.relative_lambdas, settings.method_settings), settings.threads));
    } catch (const Error& e) {
      throw Error("method " + methods::to_string(m) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mvtlasso::bench
