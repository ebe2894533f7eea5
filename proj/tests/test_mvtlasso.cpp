#include "mvtlasso/bench.hpp"
#include "mvtlasso/mvtlasso.hpp"
#include "mvtlasso/synth.hpp"
#include "mvtlasso/tdist.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace mvtlasso;

namespace {

ModelState identity_model(Index p, Index n, int k, const Vector& mu, double sigma = 1.0, double nu = 3.0) {
  ViewParams vp{Matrix::Identity(n, n), mu, sigma, k};
  return ModelState({vp}, Matrix::Identity(p, p), nu, 0.1);
}

WOptSettings scalar_opt() {
  WOptSettings o;
  o.quadratic_weight = 1.0;
  o.jacobian_exponent = 1.0;
  o.fix_signal_scale = false;
  o.max_iter = 200;
  return o;
}

synth::Dataset small_data(std::uint64_t seed, int d = 2) {
  synth::SynthSpec s;
  s.p = 20;
  s.n = 16;
  s.k = 8;
  s.r = 8;
  s.D = d;
  s.edge_prob = 0.03;
  s.seed = seed;
  return synth::generate(s);
}

Matrix chain_theta(int p) {
  Matrix t = Matrix::Identity(p, p);
  for (int i = 0; i + 1 < p; ++i) t(i, i + 1) = t(i + 1, i) = 0.45;
  return t;
}

}  // namespace

TEST(Estep, ZeroNoiseColumn) {
  Matrix x = Matrix::Zero(2, 2);
  x.col(0) << 1.0, 2.0;
  const auto tau = estep({ExpressionView::anonymous("v", x)}, identity_model(2, 2, 1, Vector(x.col(0))));
  EXPECT_DOUBLE_EQ(tau.per_view[0](1), 5.0 / 3.0);
  EXPECT_DOUBLE_EQ(tau.per_view[0](0), 5.0 / 3.0);
}

TEST(Estep, UnitSignalColumn) {
  Matrix x(2, 2);
  x << 1.0, 0.5, 1.0, -0.5;
  const auto tau = estep({ExpressionView::anonymous("v", x)}, identity_model(2, 2, 1, Vector::Zero(2)));
  EXPECT_DOUBLE_EQ(tau.per_view[0](0), 1.0);
}

TEST(Estep, ViewCountMismatch) {
  const auto v = ExpressionView::anonymous("v", Matrix::Identity(2, 2));
  EXPECT_THROW(estep({v, v}, identity_model(2, 2, 1, Vector::Zero(2))), ShapeError);
}

TEST(MstepMoments, UnitWeightsGiveEmpiricalScatter) {
  const Matrix y = testutil::gaussian(4, 9, 3);
  TauMatrix tau{{Vector::Ones(9)}};
  const auto m = mstep_moments({y}, {9}, tau);
  const Vector mean = y.rowwise().mean();
  const Matrix c = y.colwise() - mean;
  EXPECT_LT((m.mu[0] - mean).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((m.sigma - c * c.transpose() / 9.0).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MstepMoments, SingleSignalColumn) {
  Matrix y = testutil::gaussian(3, 2, 4);
  TauMatrix tau{{Vector::Constant(2, 0.3)}};
  const auto m = mstep_moments({y}, {1}, tau);
  EXPECT_LT((m.mu[0] - y.col(0)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT(m.sigma.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MstepMoments, NoiseScale) {
  Matrix y(2, 2);
  y << 0.1, 3.0, 0.2, 4.0;
  TauMatrix tau{{Vector::Ones(2)}};
  EXPECT_DOUBLE_EQ(mstep_moments({y}, {1}, tau).noise_sigma[0], std::sqrt(25.0 / 2.0));
}

TEST(MstepMoments, Errors) {
  const Matrix y = testutil::gaussian(3, 4, 1);
  TauMatrix tau{{Vector::Ones(4)}};
  EXPECT_THROW(mstep_moments({y}, {0}, tau), ValidationError);
  EXPECT_THROW(mstep_moments({y}, {5}, tau), ShapeError);
  EXPECT_THROW(mstep_moments({y, y}, {1, 1}, tau), ShapeError);
  TauMatrix bad{{Vector::Zero(4)}};
  EXPECT_THROW(mstep_moments({y}, {1}, bad), NumericError);
}

TEST(MstepTheta, IdentityScatter) {
  const Matrix theta = mstep_theta(Matrix::Identity(6, 6), 1e-5).theta;
  EXPECT_LT((theta - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(MstepTheta, RecoversPlantedChain) {
  const int p = 20;
  const Matrix truth = chain_theta(p);
  const Matrix sigma = truth.inverse();
  EdgeSet chain;
  for (int i = 0; i + 1 < p; ++i) chain.push_back({i, i + 1});
  const double top = glasso::lambda_max(sigma);
  std::vector<bench::RocPoint> pts;
  for (double rel : log_grid(1.0, 100.0, 20)) {
    const auto cm = bench::confusion(mstep_theta(sigma, rel * top).edges, chain, p);
    pts.push_back({rel, cm.fpr(), cm.tpr()});
  }
  EXPECT_GT(bench::auc(pts), 0.9);
}

TEST(MstepTheta, PermutationEquivariance) {
  const Matrix s = testutil::random_scatter(7, 5);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(7);
  perm.indices() << 3, 6, 0, 1, 5, 2, 4;
  const double lambda = 0.25 * glasso::lambda_max(s);
  glasso::GlassoSettings g;
  g.tol = 1e-8;
  const Matrix a = perm * mstep_theta(s, lambda, g).theta * perm.transpose();
  const Matrix b = mstep_theta(perm * s * perm.transpose(), lambda, g).theta;
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(MstepW, ScalarCase) {
  const Matrix x = Matrix::Ones(1, 1);
  const Matrix w = mstep_W(x, 1, Vector::Zero(1), Matrix::Ones(1, 1), 1.0, Vector::Ones(1),
                           Matrix::Constant(1, 1, 3.0), scalar_opt());
  EXPECT_NEAR(std::abs(w(0, 0)), 1.0 / std::sqrt(2.0), 1e-10);
}

TEST(MstepW, SingularValueDecoupling) {
  // orthonormal columns, Θ = I, μ = 0, all columns signal:
  // objective Σ(s_i² − ln s_i), each term minimized at s_i = 1/√2
  const Index n = 5;
  Eigen::HouseholderQR<Matrix> qr(testutil::gaussian(30, n, 8));
  const Matrix x = Matrix(qr.householderQ()).leftCols(n);
  Eigen::HouseholderQR<Matrix> qr2(testutil::gaussian(n, n, 9));
  UnmixingState start{Matrix(qr2.householderQ()), Vector::LinSpaced(n, 0.3, 2.0)};
  const auto res = mstep_W(x, static_cast<int>(n), Vector::Zero(30), Matrix::Identity(30, 30), 1.0, Vector::Ones(n),
                           start, scalar_opt());
  EXPECT_TRUE(res.ok);
  EXPECT_NEAR(res.objective_after, n * 0.5 * (1.0 + std::log(2.0)), 1e-9);
  for (Index i = 0; i < n; ++i) EXPECT_NEAR(res.state.scales(i), 1.0 / std::sqrt(2.0), 1e-9);
}

TEST(MstepW, NeverIncreasesObjective) {
  for (unsigned seed = 0; seed < 10; ++seed) {
    const Index p = 12, m = 6;
    const Matrix x = testutil::gaussian(p, m, 100 + seed);
    const Matrix theta = testutil::random_scatter(p, 200 + seed);
    const Vector mu = testutil::gaussian(p, 1, 300 + seed);
    const Vector tau = testutil::gaussian(m, 1, 400 + seed).cwiseAbs().array() + 0.1;
    Eigen::HouseholderQR<Matrix> qr(testutil::gaussian(m, m, 500 + seed));
    const UnmixingState start{Matrix(qr.householderQ()), Vector::Ones(m)};
    const auto before = w_objective(x, 3, mu, theta, 0.7, tau, start);
    const auto res = mstep_W(x, 3, mu, theta, 0.7, tau, start);
    EXPECT_LE(res.objective_after, before + 1e-10);
    EXPECT_NEAR(w_objective(x, 3, mu, theta, 0.7, tau, res.state), res.objective_after, 1e-9 * std::abs(before));
    const Matrix& q = res.state.rotation;
    EXPECT_LT((q.transpose() * q - Matrix::Identity(m, m)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(res.state.scales.head(3).array().log().sum(), 0.0, 1e-10);
    EXPECT_TRUE((res.state.scales.array() >= 1e-6).all() && (res.state.scales.array() <= 1e6).all());
  }
}

TEST(MstepW, Errors) {
  const Matrix x = testutil::gaussian(4, 3, 1);
  const UnmixingState st{Matrix::Identity(3, 3), Vector::Ones(3)};
  EXPECT_THROW(mstep_W(x, 1, Vector::Zero(4), Matrix::Identity(4, 4), 1.0, Vector::Ones(2), st), ShapeError);
  EXPECT_THROW(mstep_W(x, 4, Vector::Zero(4), Matrix::Identity(4, 4), 1.0, Vector::Ones(3), st), ValidationError);
  EXPECT_THROW(mstep_W(x, 1, Vector::Zero(4), Matrix::Identity(4, 4), 1.0, Vector::Ones(3), Matrix::Zero(3, 3),
                       WOptSettings{}),
               SingularityError);
}

TEST(PenalizedLoglik, FiniteOnRandomModels) {
  const auto data = small_data(3);
  std::vector<ViewParams> vps;
  for (const auto& v : data.views)
    vps.push_back({testutil::gaussian(16, 16, 7) + 4.0 * Matrix::Identity(16, 16), Vector::Zero(20), 1.3, 8});
  const ModelState m(vps, data.theta.theta, 3.0, 0.1);
  EXPECT_TRUE(std::isfinite(penalized_loglik(data.views, m)));
}

TEST(PenalizedLoglik, ReducesToTlassoObjective) {
  const tdist::MvtParams t(3.0, Vector::Zero(5), testutil::random_scatter(5, 2));
  const Matrix x = tdist::sample(t, 12, 4);
  const Matrix theta = testutil::random_scatter(5, 3).inverse();
  const Vector mu = testutil::gaussian(5, 1, 5);
  const ModelState m({ViewParams{Matrix::Identity(12, 12), mu, 1.0, 12}}, theta, 3.0, 0.2);
  EXPECT_NEAR(penalized_loglik({ExpressionView::anonymous("v", x)}, m),
              tlasso::penalized_loglik(x, mu, m.theta(), 3.0, 0.2), 1e-9);
}

TEST(Fit, GaussianDegenerateCaseMatchesGlasso) {
  const tdist::MvtParams g(1e6, Vector::Zero(10), chain_theta(10).inverse());
  const Matrix x = tdist::sample(g, 2000, 6);
  MvtlassoSettings s;
  s.nu = 1e6;
  s.lambda = 0.05;
  s.k_per_view = std::vector<int>{2000};
  s.estimate_unmixing = false;
  s.max_em_iter = 100;
  s.em_tol = 1e-12;
  s.glasso.tol = 1e-8;
  const auto rep = fit({ExpressionView::anonymous("v", x)}, s);
  const Matrix c = x.colwise() - x.rowwise().mean();
  auto gs = s.glasso;
  gs.lambda = 0.05;
  const Matrix ref = glasso::solve(c * c.transpose() / 2000.0, gs).theta;
  EXPECT_LT((rep.model.theta() - ref).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_LE(testutil::worst_ascent_violation(rep), testutil::kAscentSlack);
}

TEST(Fit, DeterministicAndAscending) {
  const auto data = small_data(5);
  MvtlassoSettings s;
  s.lambda = 0.05;
  s.seed = 3;
  s.max_em_iter = 15;
  const auto a = fit(data.views, s);
  const auto b = fit(data.views, s);
  EXPECT_EQ(a.model.theta(), b.model.theta());
  EXPECT_EQ(a.loglik_trace, b.loglik_trace);
  EXPECT_EQ(a.q_trace, b.q_trace);
  for (std::size_t d = 0; d < data.views.size(); ++d) EXPECT_EQ(a.model.views()[d].W, b.model.views()[d].W);
  EXPECT_EQ(a.loglik_trace.size(), a.w_step_ok.size());
  EXPECT_LE(testutil::worst_ascent_violation(a), testutil::kAscentSlack);
}

TEST(Fit, QTraceAscendsOverExactSubsteps) {
  const auto data = small_data(7);
  MvtlassoSettings s;
  s.lambda = 0.05;
  s.k_per_view = std::vector<int>{8, 8};
  s.max_em_iter = 10;
  const auto rep = fit(data.views, s);
  ASSERT_EQ(rep.q_trace.size(), rep.q_before.size());
  for (std::size_t i = 0; i < rep.q_trace.size(); ++i)
    EXPECT_GE(rep.q_trace[i], rep.q_before[i] - 1e-6 * std::max(1.0, std::abs(rep.q_before[i])));
  EXPECT_LE(testutil::worst_ascent_violation(rep), testutil::kAscentSlack);
}

TEST(Fit, SignalScaleGauge) {
  const auto data = small_data(9);
  MvtlassoSettings s;
  s.lambda = 0.05;
  s.k_per_view = std::vector<int>{8, 8};
  s.max_em_iter = 5;
  const auto init = initialize(data.views, s);
  const auto rep = fit(data.views, init, s);
  for (std::size_t d = 0; d < data.views.size(); ++d) {
    // W = U·Q·Λ with orthogonal Q, so Λ's signal entries are the column norms of U⁺W
    const Matrix& u = init.views[d].base_unmixing;
    const Matrix qs = u.colPivHouseholderQr().solve(rep.model.views()[d].W);
    double log_sum = 0.0;
    for (Index c = 0; c < 8; ++c) log_sum += std::log(qs.col(c).norm());
    EXPECT_NEAR(log_sum, 0.0, 1e-8);
  }
}

TEST(Fit, Errors) {
  const auto data = small_data(1);
  MvtlassoSettings s;
  s.lambda = 0.0;
  EXPECT_THROW(fit(data.views, s), ValidationError);
  s.lambda = 0.1;
  s.nu = 2.0;
  EXPECT_THROW(fit(data.views, s), ValidationError);
  s.nu = 3.0;
  s.k_per_view = std::vector<int>{3};
  EXPECT_THROW(fit(data.views, s), ValidationError);
  s.k_per_view = std::vector<int>{0, 3};
  EXPECT_THROW(fit(data.views, s), ValidationError);
  auto other = data.views;
  other[1] = ExpressionView::anonymous("w", testutil::gaussian(19, 16, 1));
  s.k_per_view.reset();
  EXPECT_THROW(fit(other, s), ShapeError);
}

TEST(Fit, StageNameInErrors) {
  // every signal column identical: the warm start sees a degenerate scatter
  Matrix x = testutil::gaussian(6, 1, 2).replicate(1, 4);
  MvtlassoSettings s;
  s.estimate_unmixing = false;
  s.k_per_view = std::vector<int>{4};
  try {
    fit({ExpressionView::anonymous("v", x)}, s);
    FAIL() << "expected a NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 'warm start'"), std::string::npos) << e.what();
  }
}

TEST(Fit, LambdaMaxEmptiesGraph) {
  const auto data = small_data(11);
  MvtlassoSettings s;
  s.k_per_view = std::vector<int>{8, 8};
  s.max_em_iter = 10;
  const auto init = initialize(data.views, s);
  const double top = lambda_max(data.views, init, s);
  s.lambda = top * 1.05;
  const auto rep = fit(data.views, init, s);
  EXPECT_TRUE(extract_edges(rep.model.theta()).empty());
  EXPECT_LE(testutil::worst_ascent_violation(rep), testutil::kAscentSlack);
}

TEST(Initialize, OrdersComponentsByKurtosis) {
  const auto data = small_data(12);
  MvtlassoSettings s;
  s.k_per_view = std::vector<int>{5, 6};
  const auto init = initialize(data.views, s);
  ASSERT_EQ(init.views.size(), 2u);
  for (const auto& vi : init.views) {
    EXPECT_EQ(vi.pre_unmixed.cols(), vi.base_unmixing.cols());
    EXPECT_EQ(vi.component_kurtosis.size(), vi.pre_unmixed.cols());
  }
  EXPECT_EQ(init.views[0].k, 5);
  EXPECT_EQ(init.views[1].k, 6);
  EXPECT_GT(init.data_scale, 0.0);
}

TEST(RobustKurtosis, NearZeroForGaussianPositiveForHeavyTails) {
  const Vector g = testutil::gaussian(200000, 1, 3);
  EXPECT_NEAR(robust_excess_kurtosis(g), 0.0, 0.02);
  const tdist::MvtParams t(3.0, Vector::Zero(1), Matrix::Identity(1, 1));
  EXPECT_GT(robust_excess_kurtosis(tdist::sample(t, 20000, 4).row(0).transpose()), 0.1);
}
