#include "duskill/downstream/fewshot.hpp"

#include <algorithm>

#include "duskill/datakit/segment.hpp"
#include "duskill/error.hpp"
#include "duskill/skillnet/checkpoint.hpp"

namespace duskill::downstream {

using skillnet::Variant;

nlohmann::json to_json(const FewshotConfig& c) {
  return {{"steps", c.steps}, {"batch_size", c.batch_size}, {"lr", c.lr}, {"log_interval", c.log_interval},
          {"seed", c.seed}};
}

FewshotConfig fewshot_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> keys{"steps", "batch_size", "lr", "log_interval", "seed"};
  if (!j.is_object()) throw ParameterError("fewshot config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw ParameterError("unknown fewshot config key '" + k + "'");
  FewshotConfig c;
  try {
    if (j.contains("steps")) c.steps = j["steps"].get<long>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("log_interval")) c.log_interval = j["log_interval"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("bad fewshot config value: ") + e.what());
  }
  return c;
}

template <typename T>
double policy_fit_loss(const HighLevelPolicy<T>& policy, const skillnet::SkillModel<T>& model,
                       const skillnet::Batch<T>& batch, const skillnet::NoiseDraw<T>& draw, PolicyGrads<T>* grads) {
  using Mat = Matrix<T>;
  using Cache = typename nn::Mlp<T>::Cache;
  const auto& c = model.config();
  if (!c.has_priors()) throw UnsupportedVariantError("variant " + skillnet::to_string(c.variant) + " has no latent policy");
  const Eigen::Index B = batch.size();
  const int h = c.h;
  const int L = c.latent_dim;
  const T inv_bh = T(1) / T(B * h);

  Cache c_r, c_s;
  const Mat out_r = policy.pi_rho().forward(batch.first_state, c_r);
  const auto d_r = nn::gaussian_head<T>(out_r);
  const Mat z_r = d_r.sample(draw.xi_rho);
  Mat out_s, z_s;
  nn::GaussianDist<T> d_s;
  if (policy.hierarchical()) {
    out_s = policy.pi_sigma().forward(z_r, c_s);
    d_s = nn::gaussian_head<T>(out_s);
    z_s = d_s.sample(draw.xi_sigma);
  }

  const auto& sched = model.schedule();
  const Mat Zr = skillnet::repeat_columns<T>(z_r, h);
  Mat diff, dZr, dZs;
  if (c.variant == Variant::DuSkill) {
    const Mat x = diffcore::forward_noise<T>(batch.actions, draw.ks, draw.eta, sched);
    const Mat Zs = skillnet::repeat_columns<T>(z_s, h);
    Cache ca, cb;
    const Mat u = model.decoder_noise("eps_rho", x, draw.ks, batch.states, Zr, &ca);
    const Mat v = model.decoder_noise("eps_sigma", x, draw.ks, batch.states, Zs, &cb);
    const T dl = T(c.delta);
    diff = (T(1) - dl) * u + dl * v - draw.eta;
    if (grads) {
      const Mat d = T(2) * inv_bh * diff;
      dZr = model.decoder_noise_backward("eps_rho", ca, draw.ks, (T(1) - dl) * d, nullptr);
      dZs = model.decoder_noise_backward("eps_sigma", cb, draw.ks, dl * d, nullptr);
    }
  } else if (c.variant == Variant::HDU || c.variant == Variant::DU) {
    const Mat x = diffcore::forward_noise<T>(batch.actions, draw.ks, draw.eta, sched);
    Mat Z = Zr;
    if (c.variant == Variant::HDU) {
      Z.resize(2 * L, B * h);
      Z << Zr, skillnet::repeat_columns<T>(z_s, h);
    }
    Cache ce;
    diff = model.decoder_noise("eps", x, draw.ks, batch.states, Z, &ce) - draw.eta;
    if (grads) {
      const Mat dz = model.decoder_noise_backward("eps", ce, draw.ks, T(2) * inv_bh * diff, nullptr);
      dZr = dz.topRows(L);
      if (c.variant == Variant::HDU) dZs = dz.bottomRows(L);
    }
  } else {
    Mat in(batch.states.rows() + L, B * h);
    in << batch.states, Zr;
    Cache cd;
    diff = model.net("decoder").forward(in, cd) - batch.actions;
    if (grads) dZr = model.net("decoder").backward(cd, T(2) * inv_bh * diff, nullptr).bottomRows(L);
  }
  const double loss = static_cast<double>(diff.squaredNorm()) / static_cast<double>(B * h);
  if (!std::isfinite(loss)) throw TrainingError("non-finite few-shot loss");
  if (grads == nullptr) return loss;

  grads->rho.setZero(policy.pi_rho().num_params());
  Mat d_zr = skillnet::sum_column_groups<T>(dZr, h);
  if (policy.hierarchical()) {
    grads->sigma.setZero(policy.pi_sigma().num_params());
    const Mat d_zs = skillnet::sum_column_groups<T>(dZs, h);
    d_zr += policy.pi_sigma().backward(c_s, nn::gaussian_head_backward<T>(out_s, d_zs, d_zs.cwiseProduct(draw.xi_sigma)),
                                       &grads->sigma);
  } else {
    grads->sigma.resize(0);
  }
  policy.pi_rho().backward(c_r, nn::gaussian_head_backward<T>(out_r, d_zr, d_zr.cwiseProduct(draw.xi_rho)), &grads->rho,
                           false);
  return loss;
}

template double policy_fit_loss<float>(const HighLevelPolicy<float>&, const skillnet::SkillModel<float>&,
                                       const skillnet::Batch<float>&, const skillnet::NoiseDraw<float>&,
                                       PolicyGrads<float>*);
template double policy_fit_loss<double>(const HighLevelPolicy<double>&, const skillnet::SkillModel<double>&,
                                        const skillnet::Batch<double>&, const skillnet::NoiseDraw<double>&,
                                        PolicyGrads<double>*);

FewshotResult fewshot_finetune(const Policy& policy, const skillnet::ModelBundle& frozen,
                               const envsuite::TrajectorySet& demos, const FewshotConfig& config) {
  if (demos.empty()) throw ParameterError("few-shot fine-tuning needs at least one demonstration");
  if (config.steps < 0 || config.batch_size < 1 || config.log_interval < 1)
    throw ParameterError("fewshot steps >= 0, batch_size >= 1, log_interval >= 1 required");
  const auto& model = frozen.model;
  const std::uint64_t before = skillnet::decoder_hash(model);

  auto seg = datakit::segment(demos, model.config().h).segments;
  if (seg.count() == 0) throw ParameterError("demonstrations are shorter than one skill window");
  seg = skillnet::normalize_segments(seg, frozen.norm);

  FewshotResult res;
  res.policy = policy;
  nn::Adam<float> opt_r(config.lr), opt_s(config.lr);
  Rng rng(derive_seed({config.seed, 0xf5ULL}));
  std::vector<int> idx(static_cast<std::size_t>(config.batch_size));
  PolicyGrads<float> g;
  double acc = 0.0;
  for (long step = 1; step <= config.steps; ++step) {
    for (auto& i : idx) i = static_cast<int>(rng.integer(0, seg.count() - 1));
    const auto batch = skillnet::make_batch(seg, idx);
    const auto draw = model.draw_noise(batch.size(), rng);
    acc += policy_fit_loss<float>(res.policy, model, batch, draw, &g);
    opt_r.step(res.policy.pi_rho().params(), g.rho);
    if (res.policy.hierarchical()) opt_s.step(res.policy.pi_sigma().params(), g.sigma);
    if (step % config.log_interval == 0) {
      res.loss_curve.push_back(acc / config.log_interval);
      acc = 0.0;
    }
  }
  if (skillnet::decoder_hash(model) != before) throw ContractError("decoder parameters changed during fine-tuning");
  return res;
}

FewshotResult warmstart(const Policy& policy, const skillnet::ModelBundle& frozen, const envsuite::TrajectorySet& demo,
                        const FewshotConfig& config) {
  if (demo.size() != 1)
    throw ParameterError("warmstart takes exactly one trajectory, got " + std::to_string(demo.size()));
  return fewshot_finetune(policy, frozen, demo, config);
}

}  // namespace duskill::downstream
