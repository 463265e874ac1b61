#include "duskill/downstream/rollout.hpp"

#include "duskill/datakit/norm.hpp"
#include "duskill/error.hpp"

namespace duskill::downstream {

std::uint64_t action_seed(std::uint64_t episode_seed, int t) {
  return derive_seed({episode_seed, 0xac7ULL, static_cast<std::uint64_t>(t)});
}

Eigen::MatrixXd decode_actions(const skillnet::ModelBundle& bundle, const Eigen::MatrixXf& obs,
                               const Latents<float>& z, const std::vector<std::uint64_t>& seeds) {
  const Eigen::MatrixXf s = datakit::apply_state_norm(obs, bundle.norm);
  const Eigen::MatrixXf a = bundle.model.act(s, z.z_rho, z.z_sigma, seeds);
  return datakit::invert_action_norm(a, bundle.norm).cast<double>();
}

std::vector<envsuite::Trajectory> rollout_batch(const Policy* policy, const skillnet::ModelBundle& bundle,
                                                const std::vector<EpisodeSpec>& episodes,
                                                const RolloutOptions& options,
                                                std::vector<std::vector<int>>* resample_steps) {
  const auto& cfg = bundle.config();
  const bool needs_policy = cfg.variant != skillnet::Variant::BC;
  if (needs_policy && policy == nullptr) throw ParameterError("rollout needs a high-level policy for this variant");
  const int h = cfg.h;
  const std::size_t n = episodes.size();

  std::vector<envsuite::EnvState> state(n);
  std::vector<Rng> latent_rng;
  std::vector<std::vector<Eigen::VectorXf>> obs(n);
  std::vector<std::vector<Eigen::Vector2f>> acts(n);
  std::vector<envsuite::Trajectory> out(n);
  Latents<float> held{Eigen::MatrixXf::Zero(cfg.latent_dim, static_cast<Eigen::Index>(n)),
                      Eigen::MatrixXf::Zero(cfg.sigma_dim(), static_cast<Eigen::Index>(n))};
  if (resample_steps != nullptr) resample_steps->assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    state[i] = envsuite::env_reset(episodes[i].task.domain, episodes[i].task.order, episodes[i].seed);
    latent_rng.emplace_back(derive_seed({episodes[i].seed, 0x1a7eULL}));
    obs[i].push_back(envsuite::observe(state[i]));
  }

  for (int t = 0;; ++t) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < n; ++i)
      if (!state[i].done) active.push_back(i);
    if (active.empty()) break;
    const auto m = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXf o(envsuite::kStateDim, m);
    for (Eigen::Index j = 0; j < m; ++j) o.col(j) = obs[active[static_cast<std::size_t>(j)]].back();

    if (needs_policy && t % h == 0) {
      const Eigen::MatrixXf s = datakit::apply_state_norm(o, bundle.norm);
      for (Eigen::Index j = 0; j < m; ++j) {
        const std::size_t i = active[static_cast<std::size_t>(j)];
        const Eigen::MatrixXf sj = s.col(j);
        const Latents<float> z = options.use_mean ? policy->mode(sj) : policy->sample(sj, latent_rng[i]);
        held.z_rho.col(static_cast<Eigen::Index>(i)) = z.z_rho;
        if (cfg.sigma_dim() > 0) held.z_sigma.col(static_cast<Eigen::Index>(i)) = z.z_sigma;
        if (resample_steps != nullptr) (*resample_steps)[i].push_back(t);
      }
    }
    Latents<float> z{Eigen::MatrixXf(cfg.latent_dim, m), Eigen::MatrixXf(cfg.sigma_dim(), m)};
    std::vector<std::uint64_t> seeds;
    for (Eigen::Index j = 0; j < m; ++j) {
      const std::size_t i = active[static_cast<std::size_t>(j)];
      z.z_rho.col(j) = held.z_rho.col(static_cast<Eigen::Index>(i));
      if (cfg.sigma_dim() > 0) z.z_sigma.col(j) = held.z_sigma.col(static_cast<Eigen::Index>(i));
      seeds.push_back(action_seed(episodes[i].seed, t));
    }
    const Eigen::MatrixXd a = decode_actions(bundle, o, z, seeds);
    for (Eigen::Index j = 0; j < m; ++j) {
      const std::size_t i = active[static_cast<std::size_t>(j)];
      const Eigen::Vector2d aj = a.col(j);
      auto r = envsuite::env_step(state[i], aj, episodes[i].task.domain);
      state[i] = r.state;
      acts[i].push_back(aj.cast<float>());
      out[i].rewards.push_back(static_cast<float>(r.reward));
      obs[i].push_back(envsuite::observe(state[i]));
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& tr = out[i];
    tr.states.resize(envsuite::kStateDim, static_cast<Eigen::Index>(obs[i].size()));
    for (std::size_t c = 0; c < obs[i].size(); ++c) tr.states.col(static_cast<Eigen::Index>(c)) = obs[i][c];
    tr.actions.resize(envsuite::kActionDim, static_cast<Eigen::Index>(acts[i].size()));
    for (std::size_t c = 0; c < acts[i].size(); ++c) tr.actions.col(static_cast<Eigen::Index>(c)) = acts[i][c];
    tr.domain = episodes[i].task.domain;
    tr.order = episodes[i].task.order;
    tr.seed = episodes[i].seed;
  }
  return out;
}

envsuite::Trajectory rollout(const Policy* policy, const skillnet::ModelBundle& bundle,
                             const envsuite::DomainParam& domain, const envsuite::StageOrder& order,
                             std::uint64_t seed, const RolloutOptions& options) {
  return rollout_batch(policy, bundle, {EpisodeSpec{{domain, order}, seed}}, options).front();
}

}  // namespace duskill::downstream
