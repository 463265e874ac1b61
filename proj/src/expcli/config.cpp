#include "duskill/expcli/config.hpp"

#include <algorithm>

#include "duskill/error.hpp"
#include "duskill/nn/tensor_io.hpp"

namespace duskill::expcli {

namespace {

void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ParameterError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw ParameterError("unknown key '" + k + "' in " + where);
}

template <typename V>
void read(const nlohmann::json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

bool ExperimentConfig::operator==(const ExperimentConfig& o) const { return to_json(*this) == to_json(o); }

nlohmann::json to_json(const envsuite::DatasetSpec& s) {
  nlohmann::json fam = nlohmann::json::array();
  for (auto f : s.families) fam.push_back(envsuite::to_string(f));
  return {{"families", fam},
          {"params_per_order", s.params_per_order},
          {"trajectories_per_domain", s.trajectories_per_domain},
          {"fewshot_per_target", s.fewshot_per_target},
          {"levels", s.levels},
          {"source_low", s.source_low},
          {"source_high", s.source_high},
          {"grid_step", s.grid_step},
          {"seed", s.seed}};
}

envsuite::DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"families", "params_per_order", "trajectories_per_domain", "fewshot_per_target", "levels",
                  "source_low", "source_high", "grid_step", "seed"},
                 "dataset config");
  envsuite::DatasetSpec s;
  if (j.contains("families")) {
    std::vector<std::string> names;
    read(j, "families", names);
    s.families.clear();
    for (const auto& n : names) s.families.push_back(envsuite::parse_family(n));
  }
  read(j, "params_per_order", s.params_per_order);
  read(j, "trajectories_per_domain", s.trajectories_per_domain);
  read(j, "fewshot_per_target", s.fewshot_per_target);
  read(j, "levels", s.levels);
  read(j, "source_low", s.source_low);
  read(j, "source_high", s.source_high);
  read(j, "grid_step", s.grid_step);
  read(j, "seed", s.seed);
  return s;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json model = skillnet::to_json(c.model);
  model.erase("variant");
  model.erase("init_seed");
  nlohmann::json train = skillnet::to_json(c.train);
  train.erase("seed");
  nlohmann::json fewshot = downstream::to_json(c.fewshot);
  fewshot.erase("seed");
  nlohmann::json rl = downstream::to_json(c.rl);
  rl.erase("seed");
  return {{"variant", skillnet::to_string(c.model.variant)},
          {"dataset", to_json(c.dataset)},
          {"model", model},
          {"train", train},
          {"fewshot", fewshot},
          {"rl", rl},
          {"shots", c.shots},
          {"sweep_shots", c.sweep_shots},
          {"eval_episodes", c.eval_episodes},
          {"sweep_level", c.sweep_level},
          {"rl_level", c.rl_level},
          {"rl_task", c.rl_task},
          {"seeds", c.seeds},
          {"output_dir", c.output_dir}};
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"variant", "dataset", "model", "train", "fewshot", "rl", "shots", "sweep_shots", "eval_episodes",
                  "sweep_level", "rl_level", "rl_task", "seeds", "output_dir"},
                 "experiment config");
  ExperimentConfig c;
  if (j.contains("dataset")) c.dataset = dataset_spec_from_json(j["dataset"]);
  if (j.contains("model")) {
    reject_unknown(j["model"],
                   {"state_dim", "action_dim", "omega_dim", "h", "latent_dim", "time_embed_dim", "hidden_width",
                    "hidden_layers", "beta_rho", "beta_sigma", "delta", "decoder_head", "encoder_init_std",
                    "schedule"},
                   "model config");
    c.model = skillnet::model_config_from_json(j["model"]);
  }
  if (j.contains("variant")) {
    std::string v;
    read(j, "variant", v);
    c.model.variant = skillnet::parse_variant(v);
  }
  if (j.contains("train")) {
    if (j["train"].contains("seed")) throw ParameterError("training seed comes from 'seeds', not 'train.seed'");
    c.train = skillnet::train_config_from_json(j["train"]);
  }
  if (j.contains("fewshot")) {
    if (j["fewshot"].contains("seed")) throw ParameterError("fewshot seed comes from 'seeds'");
    c.fewshot = downstream::fewshot_config_from_json(j["fewshot"]);
  }
  if (j.contains("rl")) {
    if (j["rl"].contains("seed")) throw ParameterError("rl seed comes from 'seeds'");
    c.rl = downstream::sac_config_from_json(j["rl"]);
  }
  read(j, "shots", c.shots);
  read(j, "sweep_shots", c.sweep_shots);
  read(j, "eval_episodes", c.eval_episodes);
  read(j, "sweep_level", c.sweep_level);
  read(j, "rl_level", c.rl_level);
  read(j, "rl_task", c.rl_task);
  read(j, "seeds", c.seeds);
  read(j, "output_dir", c.output_dir);
  if (c.shots < 1) throw ParameterError("shots must be >= 1");
  if (c.eval_episodes < 1) throw ParameterError("eval_episodes must be >= 1");
  if (c.seeds.empty()) throw ParameterError("at least one seed is required");
  for (int k : c.sweep_shots)
    if (k < 1) throw ParameterError("sweep_shots entries must be >= 1");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(nn::read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw FileError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig for_seed(const ExperimentConfig& c, std::uint64_t seed) {
  ExperimentConfig out = c;
  out.seeds = {seed};
  out.model.init_seed = seed;
  out.train.seed = seed;
  out.fewshot.seed = seed;
  out.rl.seed = seed;
  return out;
}

}  // namespace duskill::expcli
