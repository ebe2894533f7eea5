#include "mvtlasso/bench.hpp"
#include "mvtlasso/io.hpp"
#include "mvtlasso/methods.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <regex>

using namespace mvtlasso;
using testutil::TempDir;
using testutil::run;
using testutil::slurp;

namespace {

#ifdef MVTLASSO_CLI
const std::string kCli = MVTLASSO_CLI;
#else
const std::string kCli;
#endif

std::string cli(const std::string& args) { return "SOURCE_DATE_EPOCH=0 MVTLASSO_THREADS=1 '" + kCli + "' " + args; }

long long json_int(const std::string& text, const std::string& key) {
  std::smatch m;
  if (!std::regex_search(text, m, std::regex("\"" + key + "\": (-?[0-9]+)"))) return -1;
  return std::stoll(m[1]);
}

std::map<std::string, std::string> dir_contents(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path().string());
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    if (kCli.empty()) GTEST_SKIP() << "command-line tool not built";
  }
};

}  // namespace

TEST_F(Cli, SimulateShapesAndManifest) {
  TempDir t("sim");
  ASSERT_EQ(run(cli("simulate --p 20 --n 10 --k 6 --views 2 --seed 7 --out " + t / "o")).code, 0);
  for (const char* f : {"view_1.csv", "view_2.csv"}) {
    const auto v = io::load_csv(t / ("o/" + std::string(f)), "v");
    EXPECT_EQ(v.genes(), 20);
    EXPECT_EQ(v.samples(), 10);
  }
  const std::string manifest = slurp(t / "o/manifest.json");
  EXPECT_EQ(json_int(manifest, "seed"), 7);
  EXPECT_NE(manifest.find("\"version\""), std::string::npos);
  EXPECT_NE(manifest.find("\"wall_clock\": \"1970-01-01T00:00:00Z\""), std::string::npos);
  EXPECT_NE(manifest.find("\"inputs\""), std::string::npos);
}

TEST_F(Cli, SimulateIsByteDeterministic) {
  TempDir t("simdet");
  const std::string args = "simulate --p 20 --n 10 --k 6 --views 2 --seed 7 --out ";
  ASSERT_EQ(run(cli(args + t / "a")).code, 0);
  ASSERT_EQ(run(cli(args + t / "b")).code, 0);
  EXPECT_EQ(dir_contents(t / "a"), dir_contents(t / "b"));
}

TEST_F(Cli, SimulateRejectsKAboveN) {
  TempDir t("simk");
  const auto r = run(cli("simulate --p 20 --n 10 --k 11 --seed 1 --out " + t / "o"), t / "err");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(slurp(t / "err").find("k <= n"), std::string::npos) << slurp(t / "err");
}

TEST_F(Cli, FitGlassoMatchesLibraryAndEvalMatchesInProcess) {
  TempDir t("fitg");
  ASSERT_EQ(run(cli("simulate --p 15 --n 20 --k 10 --views 1 --seed 3 --out " + t / "sim")).code, 0);
  ASSERT_EQ(run(cli("fit --method glasso --lambda 0.3 --input " + t / "sim/view_1.csv" + " --out " + t / "fit")).code, 0);

  const auto v = io::load_csv(t / "sim/view_1.csv", "view_1");
  const Matrix c = v.data().colwise() - v.data().rowwise().mean();
  glasso::GlassoSettings g;
  g.lambda = 0.3;
  const auto est = glasso::solve(methods::scatter_of(c), g);
  EXPECT_EQ(slurp(t / "fit/edges.tsv"), io::edges_tsv(io::name_edges(est.edges, est.theta, v.gene_ids())));

  const auto r = run(cli("eval --edges " + t / "fit/edges.tsv" + " --truth " + t / "sim/truth_edges.tsv" + " --p 15"));
  ASSERT_EQ(r.code, 0);
  EdgeSet truth;
  for (const auto& e : io::load_edges(t / "sim/truth_edges.tsv")) {
    const auto& ids = v.gene_ids();
    truth.push_back(make_edge(static_cast<int>(std::find(ids.begin(), ids.end(), e.a) - ids.begin()),
                              static_cast<int>(std::find(ids.begin(), ids.end(), e.b) - ids.begin())));
  }
  normalize(truth);
  const auto cm = bench::confusion(est.edges, truth, 15);
  EXPECT_EQ(json_int(r.out, "tp"), cm.tp);
  EXPECT_EQ(json_int(r.out, "fp"), cm.fp);
  EXPECT_EQ(json_int(r.out, "fn"), cm.fn);
  EXPECT_EQ(json_int(r.out, "tn"), cm.tn);
}

TEST_F(Cli, FitErrors) {
  TempDir t("fite");
  EXPECT_EQ(run(cli("fit --input " + t / "missing.csv" + " --out " + t / "o")).code, 2);
  io::write_file(t / "a.csv", "gene_id,s1,s2,s3\ng1,1,2,3\ng2,2,1,0\ng3,0,1,5\n");
  io::write_file(t / "b.csv", "gene_id,s1,s2,s3\ng1,1,2,3\ng2,2,1,0\ng4,0,1,5\n");
  EXPECT_EQ(run(cli("fit --method glasso --input " + t / "a.csv," + t / "b.csv" + " --out " + t / "o")).code, 2);
  const auto bad = run(cli("fit --method lasso --input " + t / "a.csv" + " --out " + t / "o"), t / "err");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(slurp(t / "err").find("glasso, tlasso, mvtlasso, glasso-ica, glasso-std"), std::string::npos);
  EXPECT_EQ(run(cli("fit --method glasso --lambda -1 --input " + t / "a.csv" + " --out " + t / "o")).code, 2);
  EXPECT_EQ(run(cli("fit --method glasso --input " + t / "a.csv" + " --out /proc/forbidden/out")).code, 4);
  io::write_file(t / "flat.csv", "gene_id,s1,s2,s3\ng1,1,1,1\ng2,2,1,0\ng3,0,1,5\n");
  EXPECT_EQ(run(cli("fit --method glasso --input " + t / "flat.csv" + " --out " + t / "o")).code, 2);
}

TEST_F(Cli, FitMvtlassoWritesModelAndLog) {
  TempDir t("fitm");
  ASSERT_EQ(run(cli("simulate --p 15 --n 12 --k 6 --views 2 --seed 4 --out " + t / "sim")).code, 0);
  const std::string inputs = t / "sim/view_1.csv," + t / "sim/view_2.csv";
  ASSERT_EQ(run(cli("fit --lambda 0.05 --k 6 --max-em-iter 5 --seed 2 --input " + inputs + " --out " + t / "a")).code, 0);
  ASSERT_EQ(run(cli("fit --lambda 0.05 --k 6 --max-em-iter 5 --seed 2 --input " + inputs + " --out " + t / "b")).code, 0);
  EXPECT_EQ(dir_contents(t / "a"), dir_contents(t / "b"));
  const std::string log = slurp(t / "a/em_log.tsv");
  EXPECT_EQ(log.substr(0, log.find('\n')), "iteration\tpenalized_loglik\tq\tw_step_ok");
  EXPECT_NE(slurp(t / "a/model.json").find("\"loglik_trace\""), std::string::npos);
  EXPECT_EQ(run(cli("fit --k 6,6,6 --input " + inputs + " --out " + t / "c")).code, 2);
}

TEST_F(Cli, StabilityDeterministicAndStrict) {
  TempDir t("stab");
  ASSERT_EQ(run(cli("simulate --p 12 --n 20 --k 10 --views 2 --seed 5 --out " + t / "sim")).code, 0);
  const std::string base = "stability --method glasso --replicates 2 --lambdas 0.02,0.2 --seed 9 --input " +
                           t / "sim/view_1.csv," + t / "sim/view_2.csv" + " --out ";
  ASSERT_EQ(run(cli(base + t / "a")).code, 0);
  ASSERT_EQ(run(cli(base + t / "b")).code, 0);
  const auto a = dir_contents(t / "a");
  EXPECT_EQ(a, dir_contents(t / "b"));
  ASSERT_TRUE(a.count("pi_01.csv") && a.count("selected_02.tsv") && a.count("summary.json"));
  // with two replicates every entry is 0, 0.5 or 1; selected edges must be the 1s
  for (const char* tag : {"01", "02"}) {
    const auto pi = io::parse_csv(a.at(std::string("pi_") + tag + ".csv"), "pi", "pi");
    const auto sel = io::parse_edges(a.at(std::string("selected_") + tag + ".tsv"), "sel");
    std::size_t ones = 0;
    for (Index j = 0; j < pi.samples(); ++j)
      for (Index i = 0; i < j; ++i) ones += pi.data()(i, j) == 1.0;
    EXPECT_EQ(sel.size(), ones);
  }
  EXPECT_EQ(run(cli(base + t / "c" + " --threshold 1.5")).code, 2);
}

TEST_F(Cli, BenchOneRowPerMethod) {
  TempDir t("bench");
  io::write_file(t / "spec.json",
                 R"({"synth": {"p": 12, "n": 10, "k": 5, "views": 2}, "mvtlasso": {"max_em_iter": 5, "k": [5, 5]},)"
                 R"( "bench": {"lambda_points": 1}})");
  ASSERT_EQ(run(cli("bench --spec " + t / "spec.json" + " --methods glasso,tlasso,mvtlasso --seeds 1 --out " +
                    t / "o")).code,
            0);
  for (const char* m : {"glasso", "tlasso", "mvtlasso"}) {
    const auto lines = io::lines_of(slurp(t / ("o/roc_" + std::string(m) + ".tsv")));
    ASSERT_EQ(lines.size(), 2u) << m;
    EXPECT_EQ(lines[0], "lambda\tfpr\ttpr");
  }
  EXPECT_NE(slurp(t / "o/summary.json").find("\"auc_ranking\""), std::string::npos);
  const auto bad = run(cli("bench --methods glasso,nope --seeds 1 --out " + t / "p"), t / "err");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(slurp(t / "err").find("valid:"), std::string::npos);
  io::write_file(t / "typo.json", R"({"bench": {"seedz": 3}})");
  EXPECT_EQ(run(cli("bench --spec " + t / "typo.json" + " --out " + t / "q")).code, 2);
}

TEST_F(Cli, EvalExamples) {
  TempDir t("eval");
  io::write_file(t / "truth.tsv", "gene_i\tgene_j\tweight\ng1\tg2\t1\ng3\tg4\t1\n");
  io::write_file(t / "est.tsv", "gene_i\tgene_j\tweight\ng1\tg2\t0.5\ng1\tg3\t0.2\n");
  io::write_file(t / "empty.tsv", "gene_i\tgene_j\tweight\n");
  const auto same = run(cli("eval --edges " + t / "truth.tsv" + " --truth " + t / "truth.tsv" + " --p 4"));
  EXPECT_EQ(json_int(same.out, "fp"), 0);
  EXPECT_EQ(json_int(same.out, "fn"), 0);
  const auto empty = run(cli("eval --edges " + t / "empty.tsv" + " --truth " + t / "truth.tsv" + " --p 4"));
  EXPECT_EQ(json_int(empty.out, "tp"), 0);
  const auto r = run(cli("eval --edges " + t / "est.tsv" + " --truth " + t / "truth.tsv" + " --p 4"));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(json_int(r.out, "tp"), 1);
  EXPECT_EQ(json_int(r.out, "fp"), 1);
  EXPECT_EQ(json_int(r.out, "fn"), 1);
  EXPECT_EQ(json_int(r.out, "tn"), 3);
}

TEST_F(Cli, EvalMalformedFile) {
  TempDir t("evalbad");
  io::write_file(t / "bad.tsv", "gene_i\tgene_j\tweight\ng1\tg2\t1\ng3 g4\n");
  io::write_file(t / "truth.tsv", "g1\tg2\n");
  const auto r = run(cli("eval --edges " + t / "bad.tsv" + " --truth " + t / "truth.tsv" + " --p 4"), t / "err");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(slurp(t / "err").find("bad.tsv:3"), std::string::npos) << slurp(t / "err");
  EXPECT_EQ(run(cli("eval --edges " + t / "truth.tsv" + " --truth " + t / "truth.tsv" + " --p 1")).code, 2);
}

TEST_F(Cli, UsageErrorsAndVersion) {
  EXPECT_EQ(run(cli("")).code, 2);
  EXPECT_EQ(run(cli("simulate")).code, 2);
  const auto v = run(cli("--version"));
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find('.'), std::string::npos);
}
