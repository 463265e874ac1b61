#include <filesystem>

#include <gtest/gtest.h>

#include "duskill/datakit/norm.hpp"
#include "duskill/datakit/segment.hpp"
#include "duskill/datakit/split.hpp"
#include "duskill/envsuite/dataset.hpp"
#include "duskill/error.hpp"

using namespace duskill;
using namespace duskill::datakit;
using envsuite::Family;

namespace {

envsuite::Trajectory expert(Family f, double p, int order, std::uint64_t seed) {
  return envsuite::rollout_expert({envsuite::make_domain(f, {p, p, p, p}), envsuite::source_orders()[static_cast<std::size_t>(order)]},
                                  seed);
}

envsuite::Trajectory truncated(const envsuite::Trajectory& t, int len) {
  envsuite::Trajectory out = t;
  out.states = t.states.leftCols(len + 1);
  out.actions = t.actions.leftCols(len);
  out.rewards.resize(static_cast<std::size_t>(len));
  return out;
}

}  // namespace

TEST(Segment, OmegaEncodesFamilyAndParameters) {
  const auto w = encode_omega(envsuite::make_domain(Family::Energy, {0.1, 0.2, 0.3, 0.4}));
  Eigen::VectorXf expected(kOmegaDim);
  expected << 0, 1, 0, 0.1f, 0.2f, 0.3f, 0.4f;
  EXPECT_EQ(w, expected);
}

TEST(Segment, SlidingWindowsCoverEveryStart) {
  const auto t = truncated(expert(Family::Speed, 0.5, 0, 1), 25);
  const auto r = segment({t}, 10, 1);
  ASSERT_EQ(r.segments.count(), 16);
  EXPECT_EQ(r.skipped, 0);
  for (int i = 0; i < 16; ++i) {
    const auto s = r.segments.segment(i);
    EXPECT_EQ(s.states, t.states.middleCols(i, 10));
    EXPECT_EQ(s.actions, t.actions.middleCols(i, 10));
    EXPECT_EQ(s.first_state, t.states.col(i));
    EXPECT_EQ(r.segments.start[static_cast<std::size_t>(i)], i);
    EXPECT_EQ(r.segments.task_labels[static_cast<std::size_t>(i)], envsuite::active_goal(t, i));
  }
  EXPECT_EQ(segment({t}, 10, 10).segments.count(), 2);
}

TEST(Segment, ShortTrajectoriesAreSkipped) {
  const auto t = expert(Family::Speed, 0.5, 0, 1);
  const auto r = segment({truncated(t, 5), t}, 10, 1);
  EXPECT_EQ(r.skipped, 1);
  EXPECT_EQ(r.segments.count(), t.length() - 9);
  EXPECT_EQ(r.segments.trajectory.front(), 1);
  EXPECT_THROW(segment({t}, 0, 1), ParameterError);
}

TEST(Segment, BinaryRoundTripAndSelect) {
  const auto r = segment({expert(Family::Wind, 0.3, 2, 4)}, 10, 3);
  const auto path = std::filesystem::temp_directory_path() / "duskill_segments.bin";
  write_segments(path, r.segments);
  const auto back = read_segments(path);
  EXPECT_EQ(back.states, r.segments.states);
  EXPECT_EQ(back.actions, r.segments.actions);
  EXPECT_EQ(back.omega, r.segments.omega);
  EXPECT_EQ(back.h, 10);
  std::filesystem::remove(path);
  const auto sub = r.segments.select({2, 0});
  EXPECT_EQ(sub.segment(0).states, r.segments.segment(2).states);
  EXPECT_EQ(sub.segment(1).actions, r.segments.segment(0).actions);
}

TEST(Norm, StatisticsAndRoundTrip) {
  const envsuite::TrajectorySet set{expert(Family::Speed, 0.4, 0, 1), expert(Family::Energy, 0.6, 3, 2)};
  const auto stats = fit_norm(set);
  Eigen::MatrixXf all_s(envsuite::kStateDim, 0), all_a(envsuite::kActionDim, 0);
  for (const auto& t : set) {
    Eigen::MatrixXf s(all_s.rows(), all_s.cols() + t.states.cols());
    s << all_s, t.states;
    all_s = s;
    Eigen::MatrixXf a(all_a.rows(), all_a.cols() + t.actions.cols());
    a << all_a, t.actions;
    all_a = a;
  }
  const Eigen::MatrixXd sd = all_s.cast<double>();
  const Eigen::VectorXd mean = sd.rowwise().mean();
  EXPECT_LT((stats.state_mean - mean).norm(), 1e-9);
  const auto ns = apply_state_norm(set[0].states, stats);
  const auto na = apply_action_norm(all_a, stats);
  EXPECT_LE(na.maxCoeff(), 1.0f + 1e-6f);
  EXPECT_GE(na.minCoeff(), -1.0f - 1e-6f);
  EXPECT_NEAR(na.row(0).maxCoeff(), 1.0f, 1e-5f);
  EXPECT_LT((invert_state_norm(ns, stats) - set[0].states).cwiseAbs().maxCoeff(), 1e-5f);
  EXPECT_LT((invert_action_norm(na, stats) - all_a).cwiseAbs().maxCoeff(), 1e-5f);
  EXPECT_EQ(norm_from_json(to_json(stats)), stats);
}

TEST(Norm, ConstantActionDimensionIsWidened) {
  auto t = expert(Family::Speed, 0.5, 0, 1);
  t.actions.row(1).setConstant(0.25f);
  std::vector<std::string> warnings;
  const auto stats = fit_norm({t}, &warnings);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_NEAR(stats.action_max(1) - stats.action_min(1), 2 * kRangeEpsilon, 1e-9);
  EXPECT_TRUE(apply_action_norm(t.actions, stats).allFinite());
  EXPECT_THROW(fit_norm({}), ParameterError);
}

TEST(Split, PicksKDemosPerTaskDeterministically) {
  envsuite::DatasetSpec spec;
  spec.trajectories_per_domain = 1;
  spec.fewshot_per_target = 4;
  spec.levels = {2};
  const auto data = envsuite::generate_dataset(spec);
  const auto a = split(data.source, data.targets.at(2), 3, 17);
  const auto b = split(data.source, data.targets.at(2), 3, 17);
  ASSERT_EQ(a.fewshot.size(), 3u);
  for (std::size_t g = 0; g < 3; ++g) {
    EXPECT_EQ(a.fewshot[g].demos.size(), 3u);
    EXPECT_EQ(a.fewshot[g].demos, b.fewshot[g].demos);
    for (const auto& d : a.fewshot[g].demos) {
      EXPECT_EQ(d.domain, a.fewshot[g].task.domain);
      EXPECT_EQ(d.order, a.fewshot[g].task.order);
    }
  }
  EXPECT_EQ(a.heldout_eval.size(), 3u);
  EXPECT_EQ(a.source_train, data.source);
  EXPECT_THROW(split(data.source, data.targets.at(2), 5, 17), ParameterError);
  EXPECT_THROW(split(data.source, data.source, 1, 17), ContractError);
}
