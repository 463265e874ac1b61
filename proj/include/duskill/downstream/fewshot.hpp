#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "duskill/downstream/policy.hpp"
#include "duskill/envsuite/dataset.hpp"
#include "duskill/skillnet/trainer.hpp"

namespace duskill::downstream {

struct FewshotConfig {
  long steps = 1000;
  int batch_size = 128;
  double lr = 1e-3;
  int log_interval = 10;
  std::uint64_t seed = 0;

  bool operator==(const FewshotConfig&) const = default;
};

nlohmann::json to_json(const FewshotConfig& c);
FewshotConfig fewshot_config_from_json(const nlohmann::json& j);

template <typename T>
struct PolicyGrads {
  Vector<T> rho;
  Vector<T> sigma;
};

/// Noise-prediction (or, for SPiRLc, action-regression) loss of demo
/// segments when the latents come from the policy at each segment's first
/// state. Only policy gradients are produced; the decoder is read-only.
template <typename T>
double policy_fit_loss(const HighLevelPolicy<T>& policy, const skillnet::SkillModel<T>& model,
                       const skillnet::Batch<T>& batch, const skillnet::NoiseDraw<T>& draw,
                       PolicyGrads<T>* grads = nullptr);

struct FewshotResult {
  Policy policy;
  std::vector<double> loss_curve;  // one entry per log_interval updates
};

/// Fine-tunes only the policy on demonstration trajectories through the
/// frozen decoder. Throws ContractError if the decoder changed.
FewshotResult fewshot_finetune(const Policy& policy, const skillnet::ModelBundle& frozen,
                               const envsuite::TrajectorySet& demos, const FewshotConfig& config);

/// fewshot_finetune with exactly one demonstration.
FewshotResult warmstart(const Policy& policy, const skillnet::ModelBundle& frozen,
                        const envsuite::TrajectorySet& demo, const FewshotConfig& config);

}  // namespace duskill::downstream
