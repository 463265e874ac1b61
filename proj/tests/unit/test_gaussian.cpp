#include <cmath>

#include <gtest/gtest.h>

#include "duskill/error.hpp"
#include "duskill/nn/gaussian.hpp"
#include "duskill/rng.hpp"

using namespace duskill;
using nn::GaussianDist;

namespace {

GaussianDist<double> make(std::initializer_list<double> mean, std::initializer_list<double> std) {
  GaussianDist<double> g;
  g.mean = Eigen::Map<const Eigen::VectorXd>(mean.begin(), static_cast<Eigen::Index>(mean.size()));
  g.std = Eigen::Map<const Eigen::VectorXd>(std.begin(), static_cast<Eigen::Index>(std.size()));
  return g;
}

// Scalar KL(N(m1, s1^2) || N(m2, s2^2)) written out independently.
double kl_scalar(double m1, double s1, double m2, double s2) {
  return std::log(s2 / s1) + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5;
}

}  // namespace

TEST(GaussianKl, IdenticalDistributionsHaveZeroKl) {
  auto p = make({0.3, -1.2, 2.0}, {0.5, 1.5, 0.01});
  EXPECT_NEAR(nn::gaussian_kl(p, p)(0), 0.0, 1e-14);
}

TEST(GaussianKl, UnitShiftIsHalfPerDimension) {
  auto p = make({1.0, 1.0, 1.0, 1.0}, {1.0, 1.0, 1.0, 1.0});
  auto q = make({0.0, 0.0, 0.0, 0.0}, {1.0, 1.0, 1.0, 1.0});
  EXPECT_NEAR(nn::gaussian_kl(p, q)(0) / 4.0, 0.5, 1e-14);
}

TEST(GaussianKl, MatchesScalarFormulaPerDimension) {
  auto p = make({0.1, -0.7}, {2.0, 0.3});
  auto q = make({0.5, 0.2}, {1.0, 0.9});
  const double expected = kl_scalar(0.1, 2.0, 0.5, 1.0) + kl_scalar(-0.7, 0.3, 0.2, 0.9);
  EXPECT_NEAR(nn::gaussian_kl(p, q)(0), expected, 1e-13);
}

TEST(GaussianKl, RejectsShapeMismatchAndNonPositiveStd) {
  auto p = make({0.0, 0.0}, {1.0, 1.0});
  auto q = make({0.0}, {1.0});
  EXPECT_THROW(nn::gaussian_kl(p, q), ContractError);
  auto bad = make({0.0, 0.0}, {1.0, 0.0});
  EXPECT_THROW(nn::gaussian_kl(p, bad), Error);
}

TEST(GaussianKl, GradientMatchesFiniteDifferences) {
  auto p = make({0.1, -0.7, 0.4}, {1.3, 0.3, 0.8});
  auto q = make({0.5, 0.2, -0.1}, {0.6, 0.9, 1.7});
  const double scale = 0.7;
  const auto g = nn::gaussian_kl_grad<double>(p, q, scale);
  const double h = 1e-6;
  auto f = [&](const GaussianDist<double>& a, const GaussianDist<double>& b) { return scale * nn::gaussian_kl(a, b)(0); };
  for (int i = 0; i < 3; ++i) {
    auto check = [&](Eigen::MatrixXd GaussianDist<double>::*field, bool on_p, double analytic) {
      auto a = p, b = q, c = p, d = q;
      ((on_p ? a : b).*field)(i, 0) += h;
      ((on_p ? c : d).*field)(i, 0) -= h;
      EXPECT_NEAR((f(a, b) - f(c, d)) / (2 * h), analytic, 1e-7);
    };
    check(&GaussianDist<double>::mean, true, g.d_mean_p(i, 0));
    check(&GaussianDist<double>::std, true, g.d_std_p(i, 0));
    check(&GaussianDist<double>::mean, false, g.d_mean_q(i, 0));
    check(&GaussianDist<double>::std, false, g.d_std_q(i, 0));
  }
}

TEST(GaussianHead, SplitsMeanAndFloorsStd) {
  Eigen::MatrixXd out(4, 1);
  out << 0.5, -1.0, -100.0, 0.0;
  const auto g = nn::gaussian_head<double>(out);
  EXPECT_DOUBLE_EQ(g.mean(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(g.mean(1, 0), -1.0);
  EXPECT_NEAR(g.std(0, 0), nn::kStdFloor, 1e-12);
  EXPECT_NEAR(g.std(1, 0), std::log(2.0) + nn::kStdFloor, 1e-12);
  EXPECT_THROW(nn::gaussian_head<double>(Eigen::MatrixXd::Zero(3, 1)), ContractError);
  EXPECT_NEAR(nn::gaussian_head<double>(Eigen::MatrixXd::Constant(2, 1, nn::inverse_head_std(0.05))).std(0, 0), 0.05,
              1e-12);
}

TEST(GaussianDist, LogProbMatchesClosedForm) {
  auto p = make({0.2, -0.4}, {0.5, 2.0});
  Eigen::MatrixXd z(2, 1);
  z << 0.7, 1.0;
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double u = (z(i, 0) - p.mean(i, 0)) / p.std(i, 0);
    expected += -0.5 * u * u - std::log(p.std(i, 0)) - 0.5 * std::log(2 * M_PI);
  }
  EXPECT_NEAR(p.log_prob(z)(0), expected, 1e-13);
}

TEST(GaussianDist, MonteCarloKlAgreesWithClosedForm) {
  auto p = make({0.3, -0.2}, {0.8, 1.2});
  auto q = make({0.0, 0.4}, {1.0, 0.7});
  Rng rng(11);
  const int n = 200000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd z = p.sample(rng.normal_matrix<double>(2, 1));
    acc += p.log_prob(z)(0) - q.log_prob(z)(0);
  }
  EXPECT_NEAR(acc / n, nn::gaussian_kl(p, q)(0), 0.01);
}
