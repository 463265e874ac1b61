#include <gtest/gtest.h>

#include "duskill/datakit/segment.hpp"
#include "duskill/downstream/fewshot.hpp"
#include "duskill/downstream/policy.hpp"
#include "duskill/downstream/rollout.hpp"
#include "duskill/downstream/sac.hpp"
#include "duskill/error.hpp"
#include "duskill/skillnet/checkpoint.hpp"
#include "support.hpp"

using namespace duskill;
using namespace duskill::downstream;
using duskill::testing::central_differences;
using duskill::testing::relative_error;
using duskill::testing::tiny_batch;
using duskill::testing::tiny_config;
using skillnet::Variant;

namespace {

envsuite::TrajectorySet source_trajs() {
  envsuite::TrajectorySet t;
  for (int o = 0; o < 3; ++o)
    t.push_back(envsuite::rollout_expert(
        {envsuite::make_domain(envsuite::Family::Speed, {0.5, 0.4, 0.6, 0.5}), envsuite::source_orders()[static_cast<std::size_t>(o)]},
        10 + static_cast<std::uint64_t>(o)));
  return t;
}

skillnet::BundlePtr tiny_bundle(Variant v, long steps = 40) {
  const auto trajs = source_trajs();
  const auto norm = datakit::fit_norm(trajs);
  auto cfg = tiny_config(v);
  const auto segs = skillnet::normalize_segments(datakit::segment(trajs, cfg.h, 1).segments, norm);
  skillnet::TrainConfig tc;
  tc.steps = steps;
  tc.batch_size = 16;
  tc.log_interval = 10;
  return skillnet::train_offline(segs, norm, cfg, tc).bundle;
}

double kl_scalar(double m1, double s1, double m2, double s2) {
  return std::log(s2 / s1) + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5;
}

double kl_sum(const nn::GaussianDist<double>& p, const nn::GaussianDist<double>& q, Eigen::Index col) {
  double k = 0.0;
  for (Eigen::Index i = 0; i < p.mean.rows(); ++i)
    k += kl_scalar(p.mean(i, col), p.std(i, col), q.mean(i, col), q.std(i, col));
  return k;
}

SacBatch<double> random_sac_batch(int B, int ld, int sd, Rng& rng) {
  SacBatch<double> b;
  b.s = rng.normal_matrix<double>(8, B);
  b.z_rho = rng.normal_matrix<double>(ld, B);
  b.z_sigma = rng.normal_matrix<double>(sd, B);
  b.reward = rng.normal_matrix<double>(1, B);
  b.s_next = rng.normal_matrix<double>(8, B);
  b.discount = Eigen::MatrixXd::Constant(1, B, 0.9);
  b.discount(0, 0) = 0.0;
  return b;
}

}  // namespace

TEST(Policy, InitCopiesPriors) {
  skillnet::SkillModel<float> m(tiny_config(Variant::DuSkill));
  const auto p = init_policy<float>(m);
  EXPECT_EQ(p.pi_rho().params(), m.net("p_rho").params());
  EXPECT_EQ(p.pi_sigma().params(), m.net("p_sigma").params());
  EXPECT_FALSE(init_policy<float>(skillnet::SkillModel<float>(tiny_config(Variant::DU))).hierarchical());
  EXPECT_THROW(init_policy<float>(skillnet::SkillModel<float>(tiny_config(Variant::BC))), UnsupportedVariantError);
  const Eigen::MatrixXf s = Eigen::MatrixXf::Random(8, 4);
  const auto z = p.mode(s);
  EXPECT_LT(p.kl_to_prior(s, z.z_rho, m).cwiseAbs().maxCoeff(), 1e-6f);
}

TEST(Policy, JointLogProbFactorizes) {
  skillnet::SkillModel<double> m(tiny_config(Variant::DuSkill));
  const auto p = init_policy<double>(m);
  Rng rng(3);
  const Eigen::MatrixXd s = rng.normal_matrix<double>(8, 5);
  const auto z = p.sample(s, rng);
  EXPECT_LT((p.log_prob(s, z) - (p.log_prob_rho(s, z.z_rho) + p.log_prob_sigma(z.z_rho, z.z_sigma))).norm(), 1e-10);
}

TEST(Fewshot, FitLossGradientMatchesFiniteDifferences) {
  for (Variant v : {Variant::DuSkill, Variant::HDU, Variant::DU, Variant::SPiRLc}) {
    skillnet::SkillModel<double> m(tiny_config(v));
    auto p = init_policy<double>(m);
    const auto batch = tiny_batch(3, 5, 4);
    Rng rng(6);
    const auto draw = m.draw_noise(5, rng);
    PolicyGrads<double> g;
    policy_fit_loss<double>(p, m, batch, draw, &g);
    auto f = [&] { return policy_fit_loss<double>(p, m, batch, draw); };
    EXPECT_LT(relative_error(g.rho, central_differences(p.pi_rho().params(), f)), 1e-4) << skillnet::to_string(v);
    if (p.hierarchical()) {
      EXPECT_LT(relative_error(g.sigma, central_differences(p.pi_sigma().params(), f)), 1e-4) << skillnet::to_string(v);
    }
  }
}

TEST(Fewshot, FineTuningLowersLossAndLeavesDecoderUntouched) {
  const auto bundle = tiny_bundle(Variant::DuSkill);
  const auto before = skillnet::decoder_hash(bundle->model);
  FewshotConfig fc;
  fc.steps = 60;
  fc.batch_size = 16;
  fc.log_interval = 10;
  const auto demos = source_trajs();
  const auto r = fewshot_finetune(init_policy(*bundle), *bundle, {demos[0]}, fc);
  ASSERT_EQ(r.loss_curve.size(), 6u);
  EXPECT_LT(r.loss_curve.back(), r.loss_curve.front());
  EXPECT_EQ(skillnet::decoder_hash(bundle->model), before);
  const auto again = fewshot_finetune(init_policy(*bundle), *bundle, {demos[0]}, fc);
  EXPECT_EQ(again.policy.hash(), r.policy.hash());
  EXPECT_THROW(warmstart(init_policy(*bundle), *bundle, demos, fc), ParameterError);
  EXPECT_NO_THROW(warmstart(init_policy(*bundle), *bundle, {demos[1]}, fc));
}

TEST(Rollout, LatentsResampleEveryHSteps) {
  const auto bundle = tiny_bundle(Variant::DuSkill, 10);
  const auto p = init_policy(*bundle);
  const envsuite::DomainTask task{envsuite::make_domain(envsuite::Family::Wind, {0.2, 0.2, 0.2, 0.2}),
                                  envsuite::source_orders()[0]};
  std::vector<std::vector<int>> steps;
  const auto trajs = rollout_batch(&p, *bundle, {{task, 1}, {task, 2}}, {}, &steps);
  ASSERT_EQ(trajs.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) {
    const int T = trajs[e].length();
    ASSERT_EQ(steps[e].size(), static_cast<std::size_t>((T + bundle->config().h - 1) / bundle->config().h));
    for (std::size_t i = 0; i < steps[e].size(); ++i) EXPECT_EQ(steps[e][i], static_cast<int>(i) * bundle->config().h);
  }
  // Lockstep batching changes an episode only through float rounding
  // (a lone column takes the matrix-vector product path).
  const auto single = rollout(&p, *bundle, task.domain, task.order, 2);
  ASSERT_EQ(single.length(), trajs[1].length());
  EXPECT_LT((single.states - trajs[1].states).cwiseAbs().maxCoeff(), 1e-4f);
  EXPECT_NEAR(single.total_return(), trajs[1].total_return(), 1e-4);
  EXPECT_EQ(rollout(&p, *bundle, task.domain, task.order, 2), single);
}

// A full-size model memorizes one expert trajectory; sampling latents from
// the copied priors must then replay it on its own domain.
TEST(Rollout, OverfitBundleReplaysItsDemonstration) {
  const envsuite::DomainTask task{envsuite::make_domain(envsuite::Family::Speed, {0.45, 0.55, 0.45, 0.55}),
                                  envsuite::source_orders()[0]};
  const envsuite::TrajectorySet demo{envsuite::rollout_expert(task, 7)};
  ASSERT_EQ(demo[0].total_return(), 4.0);
  const auto norm = datakit::fit_norm(demo);
  skillnet::ModelConfig mc;
  const auto segs = skillnet::normalize_segments(datakit::segment(demo, mc.h, 1).segments, norm);
  skillnet::TrainConfig tc;
  tc.steps = 1500;
  tc.log_interval = 500;
  tc.lr_schedule = "cosine";
  const auto bundle = skillnet::train_offline(segs, norm, mc, tc).bundle;
  const auto p = init_policy(*bundle);
  std::vector<EpisodeSpec> specs;
  for (std::uint64_t e = 0; e < 5; ++e) specs.push_back({task, 100 + e});
  for (const auto& t : rollout_batch(&p, *bundle, specs)) EXPECT_GE(t.total_return(), 3.0);
}

TEST(Rollout, BehaviorCloningNeedsNoPolicy) {
  const auto bundle = tiny_bundle(Variant::BC, 10);
  const envsuite::DomainTask task{envsuite::make_domain(envsuite::Family::Speed, {0.5, 0.5, 0.5, 0.5}),
                                  envsuite::source_orders()[1]};
  const auto t = rollout(nullptr, *bundle, task.domain, task.order, 3);
  EXPECT_GT(t.length(), 0);
  const auto diff = tiny_bundle(Variant::DU, 10);
  EXPECT_THROW(rollout(nullptr, *diff, task.domain, task.order, 3), Error);
}

TEST(Sac, TdTargetMatchesHandComputation) {
  skillnet::SkillModel<double> m(tiny_config(Variant::DuSkill));
  auto p = init_policy<double>(m);
  p.pi_rho().params() += Eigen::VectorXd::Constant(p.pi_rho().num_params(), 0.01);  // differ from the prior
  Rng rng(8);
  Critics<double> critics(8 + 4 + 4, 6, 2, rng);
  critics.online[0].params() *= 1.1;
  critics.soft_update(0.5);
  const auto b = random_sac_batch(4, 4, 4, rng);
  const Eigen::MatrixXd xr = rng.normal_matrix<double>(4, 4), xs = rng.normal_matrix<double>(4, 4);
  const double alpha = 0.3;
  const auto y = td_target<double>(p, critics, m, b, alpha, xr, xs);
  for (Eigen::Index j = 0; j < 4; ++j) {
    const Eigen::MatrixXd sn = b.s_next.col(j);
    const auto pr = p.dist_rho(sn);
    const Eigen::MatrixXd zr = pr.mean + pr.std.cwiseProduct(xr.col(j));
    const auto ps = p.dist_sigma(zr);
    const Eigen::MatrixXd zs = ps.mean + ps.std.cwiseProduct(xs.col(j));
    Eigen::VectorXd in(16);
    in << sn, zr, zs;
    const double q = std::min(critics.target[0].forward(in)(0, 0), critics.target[1].forward(in)(0, 0));
    const double kl = kl_sum(pr, m.prior_invariant(sn), 0) + kl_sum(ps, m.prior_variant(zr), 0);
    EXPECT_NEAR(y(0, j), b.reward(0, j) + b.discount(0, j) * (q - alpha * kl), 1e-10);
  }
}

TEST(Sac, CriticAndPolicyGradientsMatchFiniteDifferences) {
  for (Variant v : {Variant::DuSkill, Variant::DU}) {
    skillnet::SkillModel<double> m(tiny_config(v));
    auto p = init_policy<double>(m);
    Rng rng(12);
    const int sd = m.config().sigma_dim();
    Critics<double> critics(8 + 4 + sd, 6, 2, rng);
    const auto b = random_sac_batch(5, 4, sd, rng);
    const Eigen::MatrixXd y = rng.normal_matrix<double>(1, 5);
    std::array<Eigen::VectorXd, 2> gq;
    critic_loss<double>(critics, b, y, &gq);
    for (int i = 0; i < 2; ++i) {
      auto f = [&] { return critic_loss<double>(critics, b, y); };
      EXPECT_LT(relative_error(gq[static_cast<std::size_t>(i)], central_differences(critics.online[static_cast<std::size_t>(i)].params(), f)), 1e-4);
    }
    const Eigen::MatrixXd xr = rng.normal_matrix<double>(4, 5), xs = rng.normal_matrix<double>(sd, 5);
    PolicyGrads<double> gp;
    policy_loss<double>(p, critics, m, b.s, 0.7, xr, xs, &gp);
    auto f = [&] { return policy_loss<double>(p, critics, m, b.s, 0.7, xr, xs).loss; };
    EXPECT_LT(relative_error(gp.rho, central_differences(p.pi_rho().params(), f)), 1e-4) << skillnet::to_string(v);
    if (p.hierarchical()) {
      EXPECT_LT(relative_error(gp.sigma, central_differences(p.pi_sigma().params(), f)), 1e-4);
    }
  }
}

TEST(Sac, ZeroTemperatureIsPureQAscent) {
  skillnet::SkillModel<double> m(tiny_config(Variant::DuSkill));
  auto p = init_policy<double>(m);
  p.pi_rho().params() += Eigen::VectorXd::Constant(p.pi_rho().num_params(), 0.02);  // nonzero KL
  Rng rng(21);
  Critics<double> critics(8 + 4 + 4, 6, 2, rng);
  const Eigen::MatrixXd s = rng.normal_matrix<double>(8, 5);
  const Eigen::MatrixXd xr = rng.normal_matrix<double>(4, 5), xs = rng.normal_matrix<double>(4, 5);
  PolicyGrads<double> g;
  policy_loss<double>(p, critics, m, s, 0.0, xr, xs, &g);
  // Oracle: -mean(min Q) at the reparameterized latents, nothing else.
  auto neg_q = [&] {
    const auto dr = p.dist_rho(s);
    const Eigen::MatrixXd zr = dr.mean + dr.std.cwiseProduct(xr);
    const auto ds = p.dist_sigma(zr);
    const Eigen::MatrixXd zs = ds.mean + ds.std.cwiseProduct(xs);
    const auto in = Critics<double>::input(s, zr, zs);
    return -critics.online[0].forward(in).cwiseMin(critics.online[1].forward(in)).mean();
  };
  EXPECT_LT(relative_error(g.rho, central_differences(p.pi_rho().params(), neg_q)), 1e-4);
  EXPECT_LT(relative_error(g.sigma, central_differences(p.pi_sigma().params(), neg_q)), 1e-4);
}

TEST(Sac, LargeTemperatureStepsReduceKl) {
  skillnet::SkillModel<double> m(tiny_config(Variant::DuSkill));
  auto p = init_policy<double>(m);
  Rng rng(22);
  p.pi_rho().params() += 0.05 * rng.normal_matrix<double>(p.pi_rho().num_params(), 1);
  p.pi_sigma().params() += 0.05 * rng.normal_matrix<double>(p.pi_sigma().num_params(), 1);
  Critics<double> critics(8 + 4 + 4, 6, 2, rng);
  const Eigen::MatrixXd s = rng.normal_matrix<double>(8, 16);
  const Eigen::MatrixXd xr = rng.normal_matrix<double>(4, 16), xs = rng.normal_matrix<double>(4, 16);
  double prev = policy_loss<double>(p, critics, m, s, 1e3, xr, xs).kl;
  const double first = prev;
  for (int i = 0; i < 5; ++i) {
    PolicyGrads<double> g;
    policy_loss<double>(p, critics, m, s, 1e3, xr, xs, &g);
    p.pi_rho().params() -= 1e-6 * g.rho;
    p.pi_sigma().params() -= 1e-6 * g.sigma;
    const double kl = policy_loss<double>(p, critics, m, s, 1e3, xr, xs).kl;
    EXPECT_LT(kl, prev);
    prev = kl;
  }
  EXPECT_LT(prev, first);
}

TEST(Fewshot, WarmstartMovesPolicyAwayFromPrior) {
  const auto bundle = tiny_bundle(Variant::DuSkill);
  FewshotConfig fc;
  fc.steps = 30;
  fc.batch_size = 16;
  fc.log_interval = 10;
  const auto demos = source_trajs();
  const auto p0 = init_policy(*bundle);
  const auto w = warmstart(p0, *bundle, {demos[0]}, fc);
  const Eigen::MatrixXf s = datakit::apply_state_norm(demos[0].states, bundle->norm);
  const Eigen::MatrixXf zr = p0.dist_rho(s).mean;
  EXPECT_LT(p0.kl_to_prior(s, zr, bundle->model).maxCoeff(), 1e-6f);  // priors copied verbatim
  EXPECT_GT(w.policy.kl_to_prior(s, zr, bundle->model).mean(), 0.0f);
}

TEST(Sac, CriticLossIsHalfMeanSquare) {
  Rng rng(2);
  Critics<double> c(5, 4, 1, rng);
  SacBatch<double> b;
  b.s = rng.normal_matrix<double>(3, 4);
  b.z_rho = rng.normal_matrix<double>(2, 4);
  b.z_sigma = Eigen::MatrixXd(0, 4);
  const Eigen::MatrixXd y = rng.normal_matrix<double>(1, 4);
  const auto in = Critics<double>::input(b.s, b.z_rho, b.z_sigma);
  double expected = 0.0;
  for (int i = 0; i < 2; ++i)
    expected += 0.5 * (c.online[static_cast<std::size_t>(i)].forward(in) - y).array().square().mean() / 2.0;
  EXPECT_NEAR(critic_loss<double>(c, b, y), expected, 1e-12);
}

TEST(Sac, SoftUpdateIsPolyakAverage) {
  Rng rng(4);
  Critics<double> c(5, 4, 1, rng);
  c.online[0].params().setConstant(1.0);
  c.target[0].params().setConstant(0.0);
  c.soft_update(0.25);
  EXPECT_NEAR(c.target[0].params()(3), 0.25, 1e-15);
}

TEST(Sac, TemperatureMovesTowardTargetKl) {
  const auto bundle = tiny_bundle(Variant::DuSkill, 10);
  SacConfig cfg;
  cfg.critic_width = 8;
  cfg.critic_layers = 2;
  cfg.target_kl = 1e6;  // KL far below target: alpha must fall
  SacLearner L(init_policy(*bundle), *bundle, cfg);
  Rng rng(1);
  auto b = random_sac_batch(8, 4, 4, rng).s;
  SacBatch<float> batch;
  batch.s = b.cast<float>();
  batch.s_next = batch.s;
  batch.z_rho = rng.normal_matrix<float>(4, 8);
  batch.z_sigma = rng.normal_matrix<float>(4, 8);
  batch.reward = Eigen::MatrixXf::Ones(1, 8);
  batch.discount = Eigen::MatrixXf::Constant(1, 8, 0.9f);
  const double a0 = L.alpha();
  rl_update(L, bundle->model, batch, cfg, rng);
  EXPECT_LT(L.alpha(), a0);
  cfg.target_kl = -1.0;  // any KL exceeds this: alpha must rise
  SacLearner fresh(init_policy(*bundle), *bundle, cfg);
  rl_update(fresh, bundle->model, batch, cfg, rng);
  EXPECT_GT(fresh.alpha(), a0);
}

TEST(Sac, ReplayBufferWrapsAround) {
  ReplayBuffer buf(3, 1, 1, 0);
  for (int i = 0; i < 5; ++i) {
    Eigen::VectorXf v = Eigen::VectorXf::Constant(1, static_cast<float>(i));
    buf.add(v, v, Eigen::VectorXf(0), static_cast<float>(i), v, 0.5f);
  }
  EXPECT_EQ(buf.size(), 3);
  Rng rng(1);
  const auto b = buf.sample(50, rng);
  EXPECT_EQ(b.size(), 50);
  EXPECT_GE(b.reward.minCoeff(), 2.0f);
  EXPECT_EQ(b.s, b.reward);
}

TEST(Sac, ShortRunIsDeterministicAndEvaluates) {
  const auto bundle = tiny_bundle(Variant::DuSkill, 10);
  SacConfig cfg;
  cfg.steps = 300;
  cfg.batch_size = 8;
  cfg.critic_width = 8;
  cfg.critic_layers = 2;
  cfg.eval_interval = 150;
  cfg.eval_episodes = 2;
  cfg.curve_interval = 100;
  const envsuite::DomainTask task{envsuite::make_domain(envsuite::Family::Speed, {0.5, 0.5, 0.5, 0.5}),
                                  envsuite::target_orders()[0]};
  const auto a = run_sac(init_policy(*bundle), *bundle, task, cfg);
  const auto b = run_sac(init_policy(*bundle), *bundle, task, cfg);
  EXPECT_EQ(a.policy.hash(), b.policy.hash());
  ASSERT_EQ(a.evals.size(), 3u);
  EXPECT_EQ(a.evals.front().env_step, 0);
  EXPECT_EQ(a.evals.back().env_step, 300);
  EXPECT_EQ(a.evals[1].returns, b.evals[1].returns);
  EXPECT_EQ(a.curve.size(), 3u);
  const auto bc = tiny_bundle(Variant::BC, 5);
  EXPECT_THROW(init_policy(*bc), UnsupportedVariantError);
}
