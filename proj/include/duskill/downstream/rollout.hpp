#pragma once

#include <cstdint>
#include <vector>

#include "duskill/downstream/policy.hpp"
#include "duskill/envsuite/dataset.hpp"
#include "duskill/skillnet/trainer.hpp"

namespace duskill::downstream {

struct EpisodeSpec {
  envsuite::DomainTask task;
  std::uint64_t seed = 0;
};

struct RolloutOptions {
  bool use_mean = false;  // take latent means instead of sampling
};

/// Raw environment actions for a batch of raw observations (columns) and
/// held latents. Diffusion variants draw x_K from `seeds`.
Eigen::MatrixXd decode_actions(const skillnet::ModelBundle& bundle, const Eigen::MatrixXf& obs,
                               const Latents<float>& z, const std::vector<std::uint64_t>& seeds);

/// Seed of the initial diffusion noise for step t of an episode.
std::uint64_t action_seed(std::uint64_t episode_seed, int t);

/// Runs every episode to completion in lockstep, batching decoder calls.
/// Latents are drawn from `policy` at steps 0, h, 2h, ... of each episode;
/// every action is decoded from the current state and the held latents.
/// `policy` may be null only for the BC variant. When `resample_steps` is
/// non-null it receives, per episode, the steps at which latents were drawn.
std::vector<envsuite::Trajectory> rollout_batch(const Policy* policy, const skillnet::ModelBundle& bundle,
                                                const std::vector<EpisodeSpec>& episodes,
                                                const RolloutOptions& options = {},
                                                std::vector<std::vector<int>>* resample_steps = nullptr);

envsuite::Trajectory rollout(const Policy* policy, const skillnet::ModelBundle& bundle,
                             const envsuite::DomainParam& domain, const envsuite::StageOrder& order,
                             std::uint64_t seed, const RolloutOptions& options = {});

}  // namespace duskill::downstream
