#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "duskill/diffcore/diffusion.hpp"
#include "duskill/diffcore/schedule.hpp"
#include "duskill/error.hpp"
#include "duskill/rng.hpp"

using namespace duskill;
using namespace duskill::diffcore;

TEST(Schedule, LinearBetasAndCumulativeProduct) {
  const auto s = build_schedule(50, 1e-4, 0.02);
  ASSERT_EQ(s.K(), 50);
  EXPECT_NEAR(s.beta(1), 1e-4, 1e-15);
  EXPECT_NEAR(s.beta(50), 0.02, 1e-15);
  double prod = 1.0;
  for (int k = 1; k <= 50; ++k) {
    const double beta = 1e-4 + (0.02 - 1e-4) * (k - 1) / 49.0;
    EXPECT_NEAR(s.beta(k), beta, 1e-15);
    EXPECT_NEAR(s.alpha(k), 1.0 - beta, 1e-15);
    prod *= 1.0 - beta;
    EXPECT_NEAR(s.alpha_bar(k), prod, 1e-12);
    EXPECT_EQ(s.zeta(k), 0.0);
    if (k > 1) {
      EXPECT_GT(s.beta(k), s.beta(k - 1));
      EXPECT_LT(s.alpha_bar(k), s.alpha_bar(k - 1));
    }
  }
}

TEST(Schedule, RejectsBadParametersAndSteps) {
  EXPECT_THROW(build_schedule(0, 1e-4, 0.02), ParameterError);
  EXPECT_THROW(build_schedule(10, 0.0, 0.02), ParameterError);
  EXPECT_THROW(build_schedule(10, 0.03, 0.02), ParameterError);
  EXPECT_THROW(build_schedule(10, 1e-4, 1.0), ParameterError);
  const auto s = build_schedule(10, 1e-4, 0.02);
  EXPECT_THROW(s.beta(0), ParameterError);
  EXPECT_THROW(s.alpha_bar(11), ParameterError);
}

TEST(Schedule, SingleStepUsesBetaMin) {
  const auto s = build_schedule(1, 0.3, 0.5);
  EXPECT_DOUBLE_EQ(s.beta(1), 0.3);
}

TEST(Schedule, JsonRoundTrip) {
  ScheduleSpec spec{20, 2e-4, 0.05};
  EXPECT_EQ(schedule_from_json(to_json(spec)), spec);
  EXPECT_THROW(schedule_from_json(nlohmann::json{{"K", "many"}}), Error);
}

TEST(ForwardNoise, MonteCarloMomentsMatchSchedule) {
  const auto s = build_schedule(50, 1e-4, 0.02);
  Rng rng(3);
  const int n = 100000;
  for (int k : {1, 10, 25, 50}) {
    Eigen::MatrixXd a0 = Eigen::MatrixXd::Constant(1, n, 0.6);
    Eigen::MatrixXd x = forward_noise<double>(a0, k, rng.normal_matrix<double>(1, n), s);
    const double mean = x.mean();
    const double var = (x.array() - mean).square().sum() / (n - 1);
    EXPECT_NEAR(mean, std::sqrt(s.alpha_bar(k)) * 0.6, 0.01);
    EXPECT_NEAR(var / (1.0 - s.alpha_bar(k)), 1.0, 0.02) << "k=" << k;
  }
}

TEST(ForwardNoise, PerColumnStepsMatchScalarForm) {
  const auto s = build_schedule(50, 1e-4, 0.02);
  Rng rng(5);
  Eigen::MatrixXd a0 = rng.normal_matrix<double>(2, 3);
  Eigen::MatrixXd eta = rng.normal_matrix<double>(2, 3);
  const std::vector<int> ks{1, 17, 50};
  const auto x = forward_noise<double>(a0, ks, eta, s);
  for (int j = 0; j < 3; ++j) {
    const auto one = forward_noise<double>(a0.col(j), ks[static_cast<std::size_t>(j)], eta.col(j), s);
    EXPECT_LT((x.col(j) - one).norm(), 1e-15);
  }
}

TEST(Guidance, AffineIdentities) {
  Eigen::MatrixXd u(2, 2), v(2, 2);
  u << 1, 2, 3, 4;
  v << -1, 0.5, 7, -2;
  NoiseFn<double> fu = [&](const Eigen::MatrixXd&, int, const Eigen::MatrixXd&, const Eigen::MatrixXd&) { return u; };
  NoiseFn<double> fv = [&](const Eigen::MatrixXd&, int, const Eigen::MatrixXd&, const Eigen::MatrixXd&) { return v; };
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 2), z = Eigen::MatrixXd::Zero(3, 2);
  EXPECT_EQ(guided_predict<double>(x, 1, z, z, z, 0.0, fu, fv), u);
  EXPECT_EQ(guided_predict<double>(x, 1, z, z, z, 1.0, fu, fv), v);
  EXPECT_LT((guided_predict<double>(x, 1, z, z, z, 0.5, fu, fv) - 0.5 * (u + v)).norm(), 1e-15);
  EXPECT_LT((guided_predict<double>(x, 1, z, z, z, 2.0, fu, fv) - (2.0 * v - u)).norm(), 1e-14);
  EXPECT_THROW(guided_predict<double>(x, 1, z, z, z, -0.1, fu, fv), ParameterError);
  NoiseFn<double> bad = [](const Eigen::MatrixXd&, int, const Eigen::MatrixXd&, const Eigen::MatrixXd&) {
    return Eigen::MatrixXd::Zero(3, 2).eval();
  };
  EXPECT_THROW(guided_predict<double>(x, 1, z, z, z, 0.5, fu, bad), ContractError);
}

TEST(Reverse, SingleStepInvertsForwardNoiseWithTrueNoise) {
  const auto s = build_schedule(1, 0.02, 0.02);
  Rng rng(7);
  Eigen::MatrixXd a0 = Eigen::MatrixXd::NullaryExpr(2, 64, [&] { return rng.uniform(-1.0, 1.0); });
  Eigen::MatrixXd eta = rng.normal_matrix<double>(2, 64);
  const auto x1 = forward_noise<double>(a0, 1, eta, s);
  EXPECT_LT((reverse_step<double>(x1, 1, eta, s) - a0).cwiseAbs().maxCoeff(), 1e-6);
  StepPredictor<double> oracle = [&](const Eigen::MatrixXd&, int) { return eta; };
  EXPECT_LT((denoise<double>(x1, oracle, s) - a0).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Reverse, DenoiseClampsAndReportsNonFiniteStep) {
  const auto s = build_schedule(5, 1e-4, 0.02);
  StepPredictor<double> zero = [](const Eigen::MatrixXd& x, int) { return Eigen::MatrixXd::Zero(x.rows(), x.cols()).eval(); };
  const auto out = denoise<double>(Eigen::MatrixXd::Constant(2, 1, 5.0), zero, s);
  EXPECT_EQ(out.maxCoeff(), 1.0);
  StepPredictor<double> nan_at_3 = [](const Eigen::MatrixXd& x, int k) {
    return Eigen::MatrixXd::Constant(x.rows(), x.cols(), k == 3 ? std::numeric_limits<double>::quiet_NaN() : 0.0).eval();
  };
  try {
    denoise<double>(Eigen::MatrixXd::Zero(2, 1), nan_at_3, s);
    FAIL() << "expected SamplingError";
  } catch (const SamplingError& e) {
    EXPECT_NE(std::string(e.what()).find("step 3"), std::string::npos);
  }
}

TEST(Reverse, InitialNoiseIsPerColumnSeeded) {
  const auto batch = initial_noise<double>(2, {4, 9, 4});
  EXPECT_EQ(batch.col(0), batch.col(2));
  EXPECT_EQ(batch.col(1), initial_noise<double>(2, {9}).col(0));
  EXPECT_NE(batch.col(0), batch.col(1));
}

TEST(Reverse, SampleActionStaysInRangeAndIsDeterministic) {
  const auto s = build_schedule(50, 1e-4, 0.02);
  SplitDecoders<double> dec;
  dec.eps_rho = [](const Eigen::MatrixXd& x, int, const Eigen::MatrixXd&, const Eigen::MatrixXd&) { return (0.3 * x).eval(); };
  dec.eps_sigma = [](const Eigen::MatrixXd& x, int, const Eigen::MatrixXd&, const Eigen::MatrixXd&) { return (-0.2 * x).eval(); };
  const Eigen::MatrixXd st = Eigen::MatrixXd::Zero(8, 3), z = Eigen::MatrixXd::Zero(4, 3);
  const auto a = sample_action<double>(st, z, z, s, 0.5, dec, 2, {1, 2, 3});
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_EQ(a, sample_action<double>(st, z, z, s, 0.5, dec, 2, {1, 2, 3}));
  EXPECT_THROW(sample_action<double>(st, z, z, s, 0.5, dec, 2, {1, 2}), ContractError);
}
