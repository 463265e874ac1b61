#include "duskill/skillnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "duskill/error.hpp"

namespace duskill::skillnet {

nlohmann::json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"bc_lr", c.bc_lr},
          {"log_interval", c.log_interval},
          {"lr_schedule", c.lr_schedule},
          {"seed", c.seed},
          {"divergence_factor", c.divergence_factor},
          {"divergence_patience", c.divergence_patience}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> keys{"steps",        "batch_size", "lr",
                                             "bc_lr",        "log_interval", "lr_schedule", "seed",
                                             "divergence_factor", "divergence_patience"};
  if (!j.is_object()) throw ParameterError("train config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ParameterError("unknown train config key '" + k + "'");
  TrainConfig c;
  try {
    if (j.contains("steps")) c.steps = j["steps"].get<long>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("bc_lr")) c.bc_lr = j["bc_lr"].get<double>();
    if (j.contains("log_interval")) c.log_interval = j["log_interval"].get<int>();
    if (j.contains("lr_schedule")) c.lr_schedule = j["lr_schedule"].get<std::string>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("divergence_factor")) c.divergence_factor = j["divergence_factor"].get<double>();
    if (j.contains("divergence_patience")) c.divergence_patience = j["divergence_patience"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("bad train config value: ") + e.what());
  }
  if (c.lr_schedule != "constant" && c.lr_schedule != "cosine")
    throw ParameterError("lr_schedule must be 'constant' or 'cosine'");
  return c;
}

Batch<float> make_batch(const datakit::SegmentSet& seg, const std::vector<int>& indices) {
  const int h = seg.h;
  const int S = seg.state_dim;
  const int A = seg.action_dim;
  const auto B = static_cast<Eigen::Index>(indices.size());
  Batch<float> b;
  b.window.resize(h * (S + A), B);
  b.first_state.resize(S, B);
  b.states.resize(S, B * h);
  b.actions.resize(A, B * h);
  b.omega.resize(seg.omega_dim, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const int i = indices[static_cast<std::size_t>(j)];
    if (i < 0 || i >= seg.count()) throw ContractError("segment index out of range");
    for (int t = 0; t < h; ++t) {
      const Eigen::Index src = static_cast<Eigen::Index>(i) * h + t;
      b.states.col(j * h + t) = seg.states.col(src);
      b.actions.col(j * h + t) = seg.actions.col(src);
      b.window.block(t * (S + A), j, S, 1) = seg.states.col(src);
      b.window.block(t * (S + A) + S, j, A, 1) = seg.actions.col(src);
    }
    b.first_state.col(j) = seg.states.col(static_cast<Eigen::Index>(i) * h);
    b.omega.col(j) = seg.omega.col(i);
  }
  return b;
}

datakit::SegmentSet normalize_segments(const datakit::SegmentSet& segments, const datakit::NormStats& norm) {
  datakit::SegmentSet out = segments;
  out.states = datakit::apply_state_norm(segments.states, norm);
  out.actions = datakit::apply_action_norm(segments.actions, norm);
  return out;
}

Optimizers::Optimizers(const SkillModel<float>& model, const TrainConfig& config) {
  for (const auto& name : model.names()) {
    base_lr_[name] = name == "bc" ? config.bc_lr : config.lr;
    adam_.emplace(name, nn::Adam<float>(base_lr_[name]));
  }
}

void Optimizers::scale_lr(double factor) {
  for (auto& [name, adam] : adam_) adam.set_lr(base_lr_.at(name) * factor);
}

double lr_factor(const std::string& schedule, long step, long steps) {
  if (schedule == "constant") return 1.0;
  if (schedule == "cosine") return 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step - 1) / static_cast<double>(std::max(1L, steps))));
  throw ParameterError("unknown lr_schedule '" + schedule + "'");
}

void Optimizers::apply(SkillModel<float>& model, const Grads<float>& grads) {
  for (const auto* group : {&kEncoderNets, &kPriorNets, &kDecoderNets}) {
    for (const auto& name : *group) {
      if (!model.has(name)) continue;
      auto g = grads.find(name);
      if (g == grads.end()) continue;
      adam_.at(name).step(model.net(name).params(), g->second);
    }
  }
}

TrainResult train_offline(const datakit::SegmentSet& segments, const datakit::NormStats& norm,
                          const ModelConfig& model_config, const TrainConfig& config,
                          const std::function<void(const LogEntry&)>& on_log) {
  if (segments.count() == 0) throw ParameterError("training needs at least one segment");
  if (config.steps < 0 || config.batch_size < 1 || config.log_interval < 1)
    throw ParameterError("steps >= 0, batch_size >= 1 and log_interval >= 1 are required");
  if (segments.h != model_config.h || segments.state_dim != model_config.state_dim ||
      segments.action_dim != model_config.action_dim || segments.omega_dim != model_config.omega_dim)
    throw ContractError("segment dimensions do not match the model config");

  auto bundle = std::make_shared<ModelBundle>();
  bundle->model = SkillModel<float>(model_config);
  bundle->norm = norm;
  bundle->train = config;
  SkillModel<float>& model = bundle->model;
  Optimizers opt(model, config);

  TrainResult result;
  Rng rng(derive_seed({config.seed, 0x7a1aULL}));
  std::vector<int> idx(static_cast<std::size_t>(config.batch_size));
  Grads<float> grads;
  double initial = 0.0;
  int over = 0;
  for (long step = 1; step <= config.steps; ++step) {
    for (auto& i : idx) i = static_cast<int>(rng.integer(0, segments.count() - 1));
    opt.scale_lr(lr_factor(config.lr_schedule, step, config.steps));
    const Batch<float> batch = make_batch(segments, idx);
    const NoiseDraw<float> draw = model.draw_noise(batch.size(), rng);
    const LossReport rep = model.losses(batch, draw, &grads);
    for (const auto& [name, g] : grads)
      if (!g.allFinite()) throw TrainingError("non-finite gradient in network '" + name + "' at step " + std::to_string(step));
    opt.apply(model, grads);

    if (step == 1) initial = rep.total;
    over = rep.total > config.divergence_factor * initial ? over + 1 : 0;
    if (over >= config.divergence_patience) {
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "training diverged at step %ld: total %.6g vs initial %.6g (rec %.6g, kl_rho %.6g, kl_sigma %.6g)",
                    step, rep.total, initial, rep.rec, rep.kl_rho, rep.kl_sigma);
      throw TrainingError(buf);
    }
    if (step % config.log_interval == 0) {
      result.log.push_back({step, rep});
      if (on_log) on_log(result.log.back());
    }
  }
  bundle->step_count = config.steps;
  result.bundle = std::move(bundle);
  return result;
}

}  // namespace duskill::skillnet
