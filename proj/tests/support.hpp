#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "duskill/datakit/norm.hpp"
#include "duskill/datakit/segment.hpp"
#include "duskill/envsuite/dataset.hpp"
#include "duskill/rng.hpp"
#include "duskill/skillnet/model.hpp"
#include "duskill/skillnet/trainer.hpp"

namespace duskill::testing {

/// A model small enough for exhaustive finite differences.
inline skillnet::ModelConfig tiny_config(skillnet::Variant v, std::uint64_t seed = 1) {
  skillnet::ModelConfig c;
  c.variant = v;
  c.h = 3;
  c.latent_dim = 4;
  c.time_embed_dim = 4;
  c.hidden_width = 8;
  c.hidden_layers = 2;
  c.schedule = {5, 1e-4, 0.02};
  // Large KL weights so every term visibly contributes to the gradient.
  c.beta_rho = 0.3;
  c.beta_sigma = 0.2;
  c.init_seed = seed;
  return c;
}

/// Normalized expert segments from two domain families.
inline datakit::SegmentSet expert_segments(int h, int stride = 1) {
  envsuite::TrajectorySet trajs;
  trajs.push_back(envsuite::rollout_expert(
      {envsuite::make_domain(envsuite::Family::Speed, {0.4, 0.5, 0.6, 0.4}), envsuite::source_orders()[0]}, 1));
  trajs.push_back(envsuite::rollout_expert(
      {envsuite::make_domain(envsuite::Family::Energy, {0.6, 0.4, 0.5, 0.5}), envsuite::source_orders()[4]}, 2));
  const auto norm = datakit::fit_norm(trajs);
  return skillnet::normalize_segments(datakit::segment(trajs, h, stride).segments, norm);
}

inline skillnet::Batch<double> tiny_batch(int h, int batch, std::uint64_t seed) {
  const auto segs = expert_segments(h);
  Rng rng(seed);
  std::vector<int> idx(static_cast<std::size_t>(batch));
  for (auto& i : idx) i = static_cast<int>(rng.integer(0, segs.count() - 1));
  return skillnet::make_batch(segs, idx).cast<double>();
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale < 1e-12 ? 0.0 : (a - b).norm() / scale;
}

/// Central differences of `f` with respect to every entry of `params`.
inline Eigen::VectorXd central_differences(Eigen::VectorXd& params, const std::function<double()>& f,
                                           double h = 1e-6) {
  Eigen::VectorXd g(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double keep = params(i);
    params(i) = keep + h;
    const double up = f();
    params(i) = keep - h;
    const double down = f();
    params(i) = keep;
    g(i) = (up - down) / (2 * h);
  }
  return g;
}

/// Largest per-network relative error between the analytic gradients of
/// SkillModel::losses and finite differences of the matching objective
/// (total for encoders and decoders, prior loss for priors).
inline double loss_gradient_error(skillnet::Variant v, std::string* worst = nullptr) {
  skillnet::SkillModel<double> model(tiny_config(v));
  const auto batch = tiny_batch(model.config().h, 6, 5);
  Rng rng(9);
  const auto draw = model.draw_noise(6, rng);
  skillnet::Grads<double> grads;
  model.losses(batch, draw, &grads);
  double err = 0.0;
  for (const auto& name : model.names()) {
    const bool prior = std::find(skillnet::kPriorNets.begin(), skillnet::kPriorNets.end(), name) !=
                       skillnet::kPriorNets.end();
    auto objective = [&] {
      const auto r = model.losses(batch, draw);
      return prior ? r.prior() : r.total;
    };
    const auto fd = central_differences(model.net(name).params(), objective);
    const double e = relative_error(grads.at(name), fd);
    if (e > err) {
      err = e;
      if (worst) *worst = name;
    }
  }
  return err;
}

}  // namespace duskill::testing

#include "duskill/expcli/config.hpp"

namespace duskill::testing {

/// A complete experiment that runs in seconds.
inline expcli::ExperimentConfig tiny_experiment(const std::string& output_dir,
                                                skillnet::Variant v = skillnet::Variant::DuSkill) {
  expcli::ExperimentConfig c;
  c.dataset.families = {envsuite::Family::Speed, envsuite::Family::Energy};
  c.dataset.trajectories_per_domain = 1;
  c.dataset.fewshot_per_target = 2;
  c.dataset.levels = {0, 3};
  c.model = tiny_config(v);
  c.model.beta_rho = 5e-4;
  c.model.beta_sigma = 1e-4;
  c.train.steps = 30;
  c.train.batch_size = 16;
  c.train.log_interval = 10;
  c.fewshot.steps = 10;
  c.fewshot.batch_size = 16;
  c.fewshot.log_interval = 5;
  c.rl.steps = 200;
  c.rl.batch_size = 8;
  c.rl.critic_width = 8;
  c.rl.critic_layers = 2;
  c.rl.eval_interval = 100;
  c.rl.eval_episodes = 2;
  c.rl.curve_interval = 100;
  c.shots = 1;
  c.sweep_shots = {1, 2};
  c.eval_episodes = 2;
  c.seeds = {0};
  c.output_dir = output_dir;
  return c;
}

}  // namespace duskill::testing
