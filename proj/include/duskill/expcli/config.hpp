#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "duskill/downstream/fewshot.hpp"
#include "duskill/downstream/sac.hpp"
#include "duskill/envsuite/dataset.hpp"
#include "duskill/skillnet/model.hpp"
#include "duskill/skillnet/trainer.hpp"

namespace duskill::expcli {

/// Everything an experiment needs. Defaults are the reference
/// hyperparameters; per-seed fields (model init, training, adaptation)
/// are derived from each entry of `seeds`.
struct ExperimentConfig {
  envsuite::DatasetSpec dataset;
  skillnet::ModelConfig model;  // model.variant is the experiment's variant
  skillnet::TrainConfig train;
  downstream::FewshotConfig fewshot;
  downstream::SacConfig rl;
  int shots = 3;               // demonstrations per target task for few-shot adaptation
  std::vector<int> sweep_shots{1, 2, 3, 5, 10, 15, 20};
  int eval_episodes = 10;      // per (target task, seed)
  int sweep_level = 3;         // target level of the shot-count sweep
  int rl_level = 3;
  int rl_task = 0;             // index into the target tasks of rl_level
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string output_dir = "runs";

  bool operator==(const ExperimentConfig& o) const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Missing keys take defaults; unknown keys at any level are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const envsuite::DatasetSpec& s);
envsuite::DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

/// Model, training and adaptation configs with all seeds set from `seed`.
ExperimentConfig for_seed(const ExperimentConfig& c, std::uint64_t seed);

}  // namespace duskill::expcli
