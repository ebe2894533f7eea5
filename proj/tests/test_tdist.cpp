#include "mvtlasso/rng.hpp"
#include "mvtlasso/tdist.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace mvtlasso;

namespace {

Matrix empirical_cov(const Matrix& x) {
  const Matrix c = x.colwise() - x.rowwise().mean();
  return c * c.transpose() / static_cast<double>(x.cols());
}

double rel_frobenius(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST(TDist, CauchyAtZero) {
  const tdist::MvtParams cauchy(1.0, Vector::Zero(1), Matrix::Identity(1, 1));
  EXPECT_NEAR(tdist::log_density(Vector::Zero(1), cauchy), -1.1447299, 1e-7);
  EXPECT_NEAR(tdist::log_density(Vector::Zero(1), cauchy), -std::log(std::numbers::pi), 1e-14);
}

TEST(TDist, DensityIntegratesToOne) {
  const tdist::MvtParams t4(4.0, Vector::Constant(1, 0.7), Matrix::Constant(1, 1, 2.5));
  // substitution x = μ + tan(u) keeps the heavy tails on a finite grid
  const int n = 200000;
  const double a = -std::numbers::pi / 2, b = std::numbers::pi / 2, h = (b - a) / n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = a + (i + 0.5) * h;
    const double x = 0.7 + std::tan(u);
    acc += std::exp(tdist::log_density(Vector::Constant(1, x), t4)) / (std::cos(u) * std::cos(u)) * h;
  }
  EXPECT_NEAR(acc, 1.0, 1e-4);
}

TEST(TDist, EllipticalSymmetry) {
  const Matrix sigma = testutil::random_scatter(4, 11);
  const Vector mu = testutil::gaussian(4, 1, 12);
  const tdist::MvtParams t(3.0, mu, sigma);
  for (unsigned s = 0; s < 10; ++s) {
    const Vector v = testutil::gaussian(4, 1, 100 + s);
    EXPECT_NEAR(tdist::log_density(mu + v, t), tdist::log_density(mu - v, t), 1e-12);
  }
}

TEST(TDist, ParamErrors) {
  EXPECT_THROW(tdist::MvtParams(0.0, Vector::Zero(2), Matrix::Identity(2, 2)), ValidationError);
  EXPECT_THROW(tdist::MvtParams(3.0, Vector::Zero(3), Matrix::Identity(2, 2)), ShapeError);
  EXPECT_THROW(tdist::MvtParams(3.0, Vector::Zero(2), (-Matrix::Identity(2, 2)).eval()), NumericError);
  const tdist::MvtParams t(3.0, Vector::Zero(2), Matrix::Identity(2, 2));
  EXPECT_THROW(tdist::log_density(Vector::Zero(3), t), ShapeError);
  EXPECT_THROW(tdist::sample(t, 0, 1), ValidationError);
}

TEST(TDist, TauPosteriorMean) {
  EXPECT_DOUBLE_EQ(tdist::tau_posterior_mean(0.0, 3.0, 2), 5.0 / 3.0);
  EXPECT_DOUBLE_EQ(tdist::tau_posterior_mean(5.0, 3.0, 2), 0.625);
  EXPECT_NEAR(tdist::tau_posterior_mean(7.0, 1e9, 7), 1.0, 1e-6);
  EXPECT_DOUBLE_EQ(tdist::tau_posterior_mean(4.0, 3.0, 1), 4.0 / 7.0);
}

TEST(TDist, GaussianLimitCovariance) {
  const Matrix sigma = testutil::random_scatter(3, 21);
  const tdist::MvtParams t(1e6, Vector::Zero(3), sigma);
  EXPECT_LT(rel_frobenius(empirical_cov(tdist::sample(t, 200000, 5)), sigma), 0.03);
}

TEST(TDist, CovarianceFormulaNu4) {
  const tdist::MvtParams t(4.0, Vector::Zero(2), Matrix::Identity(2, 2));
  EXPECT_LT(rel_frobenius(empirical_cov(tdist::sample(t, 200000, 6)), 2.0 * Matrix::Identity(2, 2)), 0.05);
}

TEST(TDist, SamplerDeterministic) {
  const tdist::MvtParams t(3.0, Vector::Zero(3), testutil::random_scatter(3, 1));
  const Matrix a = tdist::sample(t, 50, 9), b = tdist::sample(t, 50, 9);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, tdist::sample(t, 50, 10));
  // column j only depends on its own stream
  EXPECT_EQ(tdist::sample(t, 10, 9, 40).col(0), a.col(40));
}

TEST(Philox, StreamsAreIndependentAndUniform) {
  Philox a(1, stream_id(stream_purpose::kSignal, 0)), b(1, stream_id(stream_purpose::kNoise, 0));
  EXPECT_NE(a(), b());
  Philox c(7, 3);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = c.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}
