// mvtlasso command-line front end: simulate, fit, stability, bench, eval.

#include "mvtlasso/bench.hpp"
#include "mvtlasso/io.hpp"
#include "mvtlasso/methods.hpp"
#include "mvtlasso/stability.hpp"
#include "mvtlasso/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#ifndef MVTLASSO_VERSION
#define MVTLASSO_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mvtlasso;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

// ---------------------------------------------------------------- config

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;
  synth::SynthSpec synth{};
  methods::MethodSettings methods{};
  std::string k = "auto";
  stability::StabilitySpec stability{};
  std::vector<std::string> bench_methods{"glasso", "tlasso", "mvtlasso"};
  int bench_seeds = 20;
  std::uint64_t bench_first_seed = 1;
  int lambda_points = 50;
  double lambda_ratio = 1000.0;
};

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw ValidationError("config: unknown key '" + where + "." + key + "'");
}

template <class T>
void take(const json& obj, const char* key, T& dst, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config: '" + where + "." + key + "' has the wrong type");
  }
}

void apply_config(const json& doc, RunConfig& c) {
  reject_unknown(doc, {"seed", "threads", "synth", "mvtlasso", "glasso", "tlasso", "stability", "bench"}, "root");
  take(doc, "seed", c.seed, "root");
  take(doc, "threads", c.threads, "root");
  if (doc.contains("synth")) {
    const auto& s = doc["synth"];
    reject_unknown(s, {"p", "n", "k", "views", "nu", "edge_prob", "sigma"}, "synth");
    take(s, "p", c.synth.p, "synth");
    take(s, "n", c.synth.n, "synth");
    take(s, "k", c.synth.k, "synth");
    take(s, "views", c.synth.D, "synth");
    take(s, "nu", c.synth.nu, "synth");
    take(s, "edge_prob", c.synth.edge_prob, "synth");
    take(s, "sigma", c.synth.sigma, "synth");
  }
  if (doc.contains("mvtlasso")) {
    const auto& s = doc["mvtlasso"];
    reject_unknown(s,
                   {"nu", "lambda", "k", "max_em_iter", "em_tol", "warm_start_iter", "ica_max_iter", "ica_tol",
                    "rank_permutations", "rank_quantile", "estimate_unmixing", "w_max_iter", "w_step"},
                   "mvtlasso");
    auto& m = c.methods.mvtlasso;
    take(s, "nu", m.nu, "mvtlasso");
    take(s, "lambda", m.lambda, "mvtlasso");
    if (s.contains("k")) {
      if (s["k"].is_string())
        c.k = s["k"].get<std::string>();
      else if (s["k"].is_array()) {
        c.k.clear();
        for (const auto& v : s["k"]) c.k += (c.k.empty() ? "" : ",") + std::to_string(v.get<int>());
      } else {
        throw ValidationError("config: 'mvtlasso.k' must be \"auto\" or a list of integers");
      }
    }
    take(s, "max_em_iter", m.max_em_iter, "mvtlasso");
    take(s, "em_tol", m.em_tol, "mvtlasso");
    take(s, "warm_start_iter", m.warm_start_iter, "mvtlasso");
    take(s, "ica_max_iter", m.ica_max_iter, "mvtlasso");
    take(s, "ica_tol", m.ica_tol, "mvtlasso");
    take(s, "rank_permutations", m.rank_permutations, "mvtlasso");
    take(s, "rank_quantile", m.rank_quantile, "mvtlasso");
    take(s, "estimate_unmixing", m.estimate_unmixing, "mvtlasso");
    take(s, "w_max_iter", m.w_opt.max_iter, "mvtlasso");
    take(s, "w_step", m.w_opt.step, "mvtlasso");
  }
  if (doc.contains("glasso")) {
    const auto& s = doc["glasso"];
    reject_unknown(s, {"max_iter", "tol", "penalize_diagonal"}, "glasso");
    take(s, "max_iter", c.methods.glasso.max_iter, "glasso");
    take(s, "tol", c.methods.glasso.tol, "glasso");
    take(s, "penalize_diagonal", c.methods.glasso.penalize_diagonal, "glasso");
  }
  if (doc.contains("tlasso")) {
    const auto& s = doc["tlasso"];
    reject_unknown(s, {"max_em_iter", "tol"}, "tlasso");
    take(s, "max_em_iter", c.methods.tlasso.max_em_iter, "tlasso");
    take(s, "tol", c.methods.tlasso.tol, "tlasso");
  }
  if (doc.contains("stability")) {
    const auto& s = doc["stability"];
    reject_unknown(s, {"lambdas", "replicates", "fraction", "threshold"}, "stability");
    take(s, "lambdas", c.stability.lambdas, "stability");
    take(s, "replicates", c.stability.n_replicates, "stability");
    take(s, "fraction", c.stability.subsample_fraction, "stability");
    take(s, "threshold", c.stability.threshold, "stability");
  }
  if (doc.contains("bench")) {
    const auto& s = doc["bench"];
    reject_unknown(s, {"methods", "seeds", "first_seed", "lambda_points", "lambda_ratio"}, "bench");
    take(s, "methods", c.bench_methods, "bench");
    take(s, "seeds", c.bench_seeds, "bench");
    take(s, "first_seed", c.bench_first_seed, "bench");
    take(s, "lambda_points", c.lambda_points, "bench");
    take(s, "lambda_ratio", c.lambda_ratio, "bench");
  }
}

json config_json(const RunConfig& c) {
  const auto& m = c.methods.mvtlasso;
  return json{
      {"seed", c.seed},
      {"threads", c.threads},
      {"synth",
       {{"p", c.synth.p},
        {"n", c.synth.n},
        {"k", c.synth.k},
        {"views", c.synth.D},
        {"nu", c.synth.nu},
        {"edge_prob", c.synth.edge_prob},
        {"sigma", c.synth.sigma}}},
      {"mvtlasso",
       {{"nu", m.nu},
        {"lambda", m.lambda},
        {"k", c.k},
        {"max_em_iter", m.max_em_iter},
        {"em_tol", m.em_tol},
        {"warm_start_iter", m.warm_start_iter},
        {"ica_max_iter", m.ica_max_iter},
        {"ica_tol", m.ica_tol},
        {"rank_permutations", m.rank_permutations},
        {"rank_quantile", m.rank_quantile},
        {"estimate_unmixing", m.estimate_unmixing},
        {"w_max_iter", m.w_opt.max_iter},
        {"w_step", m.w_opt.step}}},
      {"glasso",
       {{"max_iter", c.methods.glasso.max_iter},
        {"tol", c.methods.glasso.tol},
        {"penalize_diagonal", c.methods.glasso.penalize_diagonal}}},
      {"tlasso", {{"max_em_iter", c.methods.tlasso.max_em_iter}, {"tol", c.methods.tlasso.tol}}},
      {"stability",
       {{"lambdas", c.stability.lambdas},
        {"replicates", c.stability.n_replicates},
        {"fraction", c.stability.subsample_fraction},
        {"threshold", c.stability.threshold}}},
      {"bench",
       {{"methods", c.bench_methods},
        {"seeds", c.bench_seeds},
        {"first_seed", c.bench_first_seed},
        {"lambda_points", c.lambda_points},
        {"lambda_ratio", c.lambda_ratio}}}};
}

// ---------------------------------------------------------------- helpers

std::string sha256_file(const std::string& path) {
  const std::string data = io::read_file(path);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw io::IoError("sha256 failed for '" + path + "'");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

// SOURCE_DATE_EPOCH pins the timestamp for reproducible manifests.
std::string wall_clock() {
  std::time_t t = std::time(nullptr);
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      t = static_cast<std::time_t>(std::stoll(sde));
    } catch (...) {
    }
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw io::IoError("cannot create output directory '" + dir + "'");
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_json(const std::string& path, const json& j) { io::write_file(path, j.dump(2) + "\n"); }

void write_manifest(const std::string& dir, const std::string& command, const RunConfig& c,
                    const std::vector<std::string>& inputs) {
  json digests = json::object();
  for (const auto& in : inputs) digests[in] = sha256_file(in);
  write_json(join(dir, "manifest.json"), json{{"tool", "mvtlasso"},
                                              {"version", MVTLASSO_VERSION},
                                              {"command", command},
                                              {"config", config_json(c)},
                                              {"seed", c.seed},
                                              {"wall_clock", wall_clock()},
                                              {"inputs", digests}});
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& part : io::split(s, ','))
    if (!part.empty()) out.push_back(part);
  return out;
}

std::vector<ExpressionView> load_views(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ValidationError("--input lists no files");
  std::vector<ExpressionView> views;
  std::set<std::string> ids;
  for (const auto& path : paths) {
    std::string id = fs::path(path).stem().string();
    while (ids.count(id)) id += "_";
    ids.insert(id);
    views.push_back(io::load_csv(path, id));
  }
  return io::align_genes(std::move(views));
}

void apply_k(const std::string& k, std::size_t n_views, MvtlassoSettings& s) {
  if (k == "auto") {
    s.k_per_view.reset();
    return;
  }
  std::vector<int> ks;
  for (const auto& part : split_list(k)) {
    try {
      std::size_t used = 0;
      ks.push_back(std::stoi(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ValidationError("--k must be 'auto' or a comma-separated list of integers");
    }
  }
  if (ks.size() == 1 && n_views > 1) ks.assign(n_views, ks.front());
  if (ks.size() != n_views) throw ValidationError("--k lists " + std::to_string(ks.size()) + " ranks for " +
                                                  std::to_string(n_views) + " views");
  s.k_per_view = ks;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// ---------------------------------------------------------------- commands

int cmd_simulate(RunConfig& c, const std::string& out) {
  c.synth.r = c.synth.n - c.synth.k;
  c.synth.seed = c.seed;
  if (c.synth.k < 1 || c.synth.k > c.synth.n)
    throw ValidationError("--k must satisfy 1 <= k <= n (got k=" + std::to_string(c.synth.k) +
                          ", n=" + std::to_string(c.synth.n) + ")");
  if (c.synth.n < 2) throw ValidationError("--n must be at least 2");
  const auto data = synth::generate(c.synth);
  ensure_dir(out);
  for (const auto& v : data.views) io::write_file(join(out, v.view_id() + ".csv"), io::to_csv(v));
  const auto& genes = data.views.front().gene_ids();
  io::write_file(join(out, "truth_edges.tsv"), io::edges_tsv(io::name_edges(data.theta.edges, data.theta.theta, genes)));
  io::write_file(join(out, "truth_theta.csv"), io::matrix_csv(data.theta.theta, genes));
  write_manifest(out, "simulate", c, {});
  return kExitOk;
}

int cmd_fit(RunConfig& c, const std::vector<std::string>& inputs, const std::string& method_name,
            const std::string& out) {
  const auto method = methods::parse_method(method_name);
  const auto views = load_views(inputs);
  auto settings = c.methods;
  settings.seed = c.seed;
  settings.mvtlasso.seed = c.seed;
  settings.tlasso.nu = settings.mvtlasso.nu;
  apply_k(c.k, views.size(), settings.mvtlasso);
  const double lambda = settings.mvtlasso.lambda;
  const auto& genes = views.front().gene_ids();

  json model;
  model["method"] = method_name;
  model["lambda"] = lambda;
  model["genes"] = genes;
  std::string log = "iteration\tpenalized_loglik\tq\tw_step_ok\n";
  Matrix theta;
  if (method == methods::Method::Mvtlasso) {
    const FitReport rep = fit(views, settings.mvtlasso);
    theta = rep.model.theta();
    json vs = json::array();
    for (std::size_t d = 0; d < views.size(); ++d) {
      const auto& vp = rep.model.views()[d];
      vs.push_back({{"view_id", views[d].view_id()},
                    {"k", vp.k},
                    {"sigma", vp.sigma},
                    {"mu", vector_json(vp.mu)},
                    {"W", matrix_json(vp.W)}});
    }
    model["nu"] = rep.model.nu();
    model["views"] = vs;
    model["loglik_trace"] = rep.loglik_trace;
    model["q_trace"] = rep.q_trace;
    model["iterations"] = rep.iterations;
    model["converged"] = rep.converged;
    model["warnings"] = rep.warnings;
    for (std::size_t i = 0; i < rep.loglik_trace.size(); ++i)
      log += std::to_string(i + 1) + "\t" + io::format_double(rep.loglik_trace[i]) + "\t" +
             io::format_double(rep.q_trace[i]) + "\t" + (rep.w_step_ok[i] ? "1" : "0") + "\n";
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  } else {
    theta = methods::fit_one(method, views, lambda, settings).theta;
  }
  model["theta"] = matrix_json(theta);
  const auto est = PrecisionEstimate::from_theta(theta, lambda);

  ensure_dir(out);
  write_json(join(out, "model.json"), model);
  io::write_file(join(out, "edges.tsv"), io::edges_tsv(io::name_edges(est.edges, theta, genes)));
  io::write_file(join(out, "em_log.tsv"), log);
  write_manifest(out, "fit", c, inputs);
  return kExitOk;
}

int cmd_stability(RunConfig& c, const std::vector<std::string>& inputs, const std::string& method_name,
                  const std::string& out) {
  const auto method = methods::parse_method(method_name);
  const auto views = load_views(inputs);
  auto settings = c.methods;
  settings.seed = c.seed;
  settings.mvtlasso.seed = c.seed;
  settings.tlasso.nu = settings.mvtlasso.nu;
  apply_k(c.k, views.size(), settings.mvtlasso);
  auto spec = c.stability;
  spec.seed = c.seed;
  const auto results = stability::run(
      views, [&](const std::vector<ExpressionView>& v, double l) { return methods::fit_one(method, v, l, settings); },
      spec, resolve_threads(c.threads));
  const auto lambdas = spec.lambdas.empty() ? stability::default_lambdas(views) : spec.lambdas;
  const auto& genes = views.front().gene_ids();

  ensure_dir(out);
  json summary = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    char tag[16];
    std::snprintf(tag, sizeof tag, "%02zu", i + 1);
    const auto& r = results[i];
    io::write_file(join(out, std::string("pi_") + tag + ".csv"), io::matrix_csv(r.pi.pi, genes));
    io::write_file(join(out, std::string("selected_") + tag + ".tsv"),
                   io::edges_tsv(io::name_edges(r.selected, r.pi.pi, genes)));
    summary.push_back({{"index", i + 1},
                       {"lambda", lambdas[i]},
                       {"selected", r.selected.size()},
                       {"failures", r.failures},
                       {"valid", r.valid}});
  }
  write_json(join(out, "summary.json"), json{{"method", method_name}, {"lambdas", summary}});
  write_manifest(out, "stability", c, inputs);
  return kExitOk;
}

int cmd_bench(RunConfig& c, const std::string& out) {
  std::vector<methods::Method> list;
  for (const auto& name : c.bench_methods) list.push_back(methods::parse_method(name));
  if (list.empty()) throw ValidationError("--methods lists no methods");
  if (c.bench_seeds < 1) throw ValidationError("--seeds must be positive");
  if (c.lambda_points < 1) throw ValidationError("--lambda-points must be positive");
  c.synth.r = c.synth.n - c.synth.k;
  bench::BenchSettings bs;
  bs.relative_lambdas = log_grid(1.0, c.lambda_ratio, c.lambda_points);
  bs.seeds = bench::seed_range(c.bench_first_seed, c.bench_seeds);
  bs.method_settings = c.methods;
  bs.method_settings.seed = c.seed;
  bs.method_settings.mvtlasso.seed = c.seed;
  bs.method_settings.tlasso.nu = bs.method_settings.mvtlasso.nu;
  apply_k(c.k, static_cast<std::size_t>(c.synth.D), bs.method_settings.mvtlasso);
  bs.threads = resolve_threads(c.threads);
  const auto curves = bench::compare_methods(c.synth, list, bs);

  ensure_dir(out);
  json rows = json::array();
  for (const auto& curve : curves) {
    std::string tsv = "lambda\tfpr\ttpr\n";
    for (const auto& pt : curve.points)
      tsv += io::format_double(pt.lambda) + "\t" + io::format_double(pt.fpr) + "\t" + io::format_double(pt.tpr) + "\n";
    io::write_file(join(out, "roc_" + curve.method + ".tsv"), tsv);
    rows.push_back({{"method", curve.method},
                    {"auc", curve.auc},
                    {"n_seeds", curve.n_seeds},
                    {"dropped", curve.dropped},
                    {"valid", curve.valid},
                    {"failures", curve.failures}});
  }
  std::vector<const bench::RocCurve*> order;
  for (const auto& cv : curves) order.push_back(&cv);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->auc > b->auc; });
  std::vector<std::string> ranking;
  for (auto* cv : order) ranking.push_back(cv->method);
  write_json(join(out, "summary.json"), json{{"methods", rows}, {"auc_ranking", ranking}});
  write_manifest(out, "bench", c, {});
  return kExitOk;
}

int cmd_eval(const std::string& edges_path, const std::string& truth_path, int p) {
  if (p < 2) throw ValidationError("--p must be at least 2");
  const auto est = io::load_edges(edges_path);
  const auto truth = io::load_edges(truth_path);
  std::set<std::string> genes;
  for (const auto* set : {&est, &truth})
    for (const auto& e : *set) {
      genes.insert(e.a);
      genes.insert(e.b);
    }
  if (static_cast<int>(genes.size()) > p)
    throw ValidationError("edge files mention " + std::to_string(genes.size()) + " genes but --p is " + std::to_string(p));
  std::vector<std::string> ids(genes.begin(), genes.end());
  auto to_set = [&](const std::vector<io::NamedEdge>& named) {
    EdgeSet out;
    for (const auto& e : named) {
      const auto a = std::lower_bound(ids.begin(), ids.end(), e.a) - ids.begin();
      const auto b = std::lower_bound(ids.begin(), ids.end(), e.b) - ids.begin();
      out.push_back(make_edge(static_cast<int>(a), static_cast<int>(b)));
    }
    return out;
  };
  const auto cm = bench::confusion(to_set(est), to_set(truth), p);
  const json j{{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}, {"tpr", cm.tpr()}, {"fpr", cm.fpr()}};
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse shared precision estimation from multiple expression matrices"};
  app.set_version_flag("--version", MVTLASSO_VERSION);
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--config", config_path, "JSON run configuration (flags override it)");
  app.add_option("--threads", threads, "worker threads (default: MVTLASSO_THREADS or all cores)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate synthetic views with a planted network");
  std::optional<int> s_p, s_n, s_k, s_views;
  std::optional<double> s_nu, s_edge, s_sigma;
  std::string out_dir;
  sim->add_option("--p", s_p, "genes");
  sim->add_option("--n", s_n, "samples per view");
  sim->add_option("--k", s_k, "signal rank per view");
  sim->add_option("--views", s_views, "number of views");
  sim->add_option("--nu", s_nu, "degrees of freedom");
  sim->add_option("--edge-prob", s_edge, "probability of each edge sign");
  sim->add_option("--sigma", s_sigma, "noise scale");
  sim->add_option("--seed", seed, "random seed");
  sim->add_option("--out", out_dir, "output directory")->required();

  // fit
  auto* fitc = app.add_subcommand("fit", "estimate the shared precision matrix");
  std::string inputs, method = "mvtlasso";
  std::optional<double> f_lambda, f_nu;
  std::optional<std::string> f_k;
  std::optional<int> f_iter;
  fitc->add_option("--input", inputs, "comma-separated expression CSV files")->required();
  fitc->add_option("--lambda", f_lambda, "penalty");
  fitc->add_option("--nu", f_nu, "degrees of freedom");
  fitc->add_option("--k", f_k, "'auto' or per-view signal ranks k1,k2,...");
  fitc->add_option("--method", method, "mvtlasso|tlasso|glasso|glasso-ica|glasso-std");
  fitc->add_option("--max-em-iter", f_iter, "EM iteration cap");
  fitc->add_option("--seed", seed, "random seed");
  fitc->add_option("--out", out_dir, "output directory")->required();

  // stability
  auto* stab = app.add_subcommand("stability", "stability selection over a penalty grid");
  std::string st_lambdas = "grid";
  std::optional<int> st_rep;
  std::optional<double> st_frac, st_thr;
  stab->add_option("--input", inputs, "comma-separated expression CSV files")->required();
  stab->add_option("--method", method, "estimator");
  stab->add_option("--lambdas", st_lambdas, "'grid' or a comma-separated list");
  stab->add_option("--replicates", st_rep, "subsamples per penalty");
  stab->add_option("--fraction", st_frac, "fraction of samples kept per view");
  stab->add_option("--threshold", st_thr, "selection probability threshold (strict)");
  stab->add_option("--nu", f_nu, "degrees of freedom");
  stab->add_option("--k", f_k, "'auto' or per-view signal ranks");
  stab->add_option("--seed", seed, "random seed");
  stab->add_option("--out", out_dir, "output directory")->required();

  // bench
  auto* benc = app.add_subcommand("bench", "ROC benchmark on synthetic data");
  std::string spec_path, b_methods;
  std::optional<int> b_seeds, b_points;
  benc->add_option("--spec", spec_path, "JSON configuration with the synthetic spec");
  benc->add_option("--methods", b_methods, "comma-separated method names");
  benc->add_option("--seeds", b_seeds, "number of seeds");
  benc->add_option("--lambda-points", b_points, "penalty grid size");
  benc->add_option("--seed", seed, "estimator seed");
  benc->add_option("--out", out_dir, "output directory")->required();

  // eval
  auto* evalc = app.add_subcommand("eval", "confusion counts of an edge list against a truth list");
  std::string e_edges, e_truth;
  int e_p = 0;
  evalc->add_option("--edges", e_edges, "estimated edges TSV")->required();
  evalc->add_option("--truth", e_truth, "true edges TSV")->required();
  evalc->add_option("--p", e_p, "number of genes")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    for (const auto& path : {config_path, spec_path}) {
      if (path.empty()) continue;
      json doc;
      try {
        doc = json::parse(io::read_file(path));
      } catch (const json::parse_error& e) {
        throw ValidationError("config '" + path + "': " + e.what());
      }
      apply_config(doc, cfg);
    }
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (s_p) cfg.synth.p = *s_p;
    if (s_n) cfg.synth.n = *s_n;
    if (s_k) cfg.synth.k = *s_k;
    if (s_views) cfg.synth.D = *s_views;
    if (s_nu) cfg.synth.nu = *s_nu;
    if (s_edge) cfg.synth.edge_prob = *s_edge;
    if (s_sigma) cfg.synth.sigma = *s_sigma;
    if (f_lambda) cfg.methods.mvtlasso.lambda = *f_lambda;
    if (f_nu) cfg.methods.mvtlasso.nu = *f_nu;
    if (f_k) cfg.k = *f_k;
    if (f_iter) cfg.methods.mvtlasso.max_em_iter = *f_iter;
    if (st_rep) cfg.stability.n_replicates = *st_rep;
    if (st_frac) cfg.stability.subsample_fraction = *st_frac;
    if (st_thr) cfg.stability.threshold = *st_thr;
    if (*stab && st_lambdas != "grid") {
      cfg.stability.lambdas.clear();
      for (const auto& part : split_list(st_lambdas))
        cfg.stability.lambdas.push_back(io::parse_double(part, "--lambdas"));
    }
    if (!b_methods.empty()) cfg.bench_methods = split_list(b_methods);
    if (b_seeds) cfg.bench_seeds = *b_seeds;
    if (b_points) cfg.lambda_points = *b_points;

    if (*sim) return cmd_simulate(cfg, out_dir);
    if (*fitc) return cmd_fit(cfg, split_list(inputs), method, out_dir);
    if (*stab) return cmd_stability(cfg, split_list(inputs), method, out_dir);
    if (*benc) return cmd_bench(cfg, out_dir);
    if (*evalc) return cmd_eval(e_edges, e_truth, e_p);
  } catch (const io::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitValidation;
}
