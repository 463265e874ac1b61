#include "duskill/downstream/sac.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "duskill/datakit/norm.hpp"
#include "duskill/error.hpp"
#include "duskill/skillnet/checkpoint.hpp"

namespace duskill::downstream {

nlohmann::json to_json(const SacConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"gamma", c.gamma},
          {"tau", c.tau},
          {"replay_capacity", c.replay_capacity},
          {"target_kl", c.target_kl},
          {"init_alpha", c.init_alpha},
          {"critic_width", c.critic_width},
          {"critic_layers", c.critic_layers},
          {"updates_per_transition", c.updates_per_transition},
          {"curve_interval", c.curve_interval},
          {"eval_interval", c.eval_interval},
          {"eval_episodes", c.eval_episodes},
          {"seed", c.seed}};
}

SacConfig sac_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("rl config must be a JSON object");
  SacConfig c;
  const nlohmann::json defaults = to_json(c);
  for (const auto& [k, v] : j.items())
    if (!defaults.contains(k)) throw ParameterError("unknown rl config key '" + k + "'");
  try {
    if (j.contains("steps")) c.steps = j["steps"].get<long>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
    if (j.contains("tau")) c.tau = j["tau"].get<double>();
    if (j.contains("replay_capacity")) c.replay_capacity = j["replay_capacity"].get<long>();
    if (j.contains("target_kl")) c.target_kl = j["target_kl"].get<double>();
    if (j.contains("init_alpha")) c.init_alpha = j["init_alpha"].get<double>();
    if (j.contains("critic_width")) c.critic_width = j["critic_width"].get<int>();
    if (j.contains("critic_layers")) c.critic_layers = j["critic_layers"].get<int>();
    if (j.contains("updates_per_transition")) c.updates_per_transition = j["updates_per_transition"].get<int>();
    if (j.contains("curve_interval")) c.curve_interval = j["curve_interval"].get<int>();
    if (j.contains("eval_interval")) c.eval_interval = j["eval_interval"].get<long>();
    if (j.contains("eval_episodes")) c.eval_episodes = j["eval_episodes"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("bad rl config value: ") + e.what());
  }
  return c;
}

template <typename T>
Critics<T>::Critics(int input_dim, int width, int layers, Rng& rng) {
  for (int i = 0; i < 2; ++i) {
    online[i] = nn::Mlp<T>(nn::make_shape(input_dim, width, layers, 1), rng);
    target[i] = online[i];
  }
}

template <typename T>
Matrix<T> Critics<T>::input(const Matrix<T>& s, const Matrix<T>& z_rho, const Matrix<T>& z_sigma) {
  Matrix<T> in(s.rows() + z_rho.rows() + z_sigma.rows(), s.cols());
  in << s, z_rho, z_sigma;
  return in;
}

template <typename T>
void Critics<T>::soft_update(double tau) {
  for (int i = 0; i < 2; ++i)
    target[i].params() = T(1.0 - tau) * target[i].params() + T(tau) * online[i].params();
}

template <typename T>
Matrix<T> td_target(const HighLevelPolicy<T>& policy, const Critics<T>& critics, const skillnet::SkillModel<T>& prior,
                    const SacBatch<T>& batch, double alpha, const Matrix<T>& xi_rho, const Matrix<T>& xi_sigma) {
  const Latents<T> z = policy.sample(batch.s_next, xi_rho, xi_sigma);
  const Matrix<T> in = Critics<T>::input(batch.s_next, z.z_rho, z.z_sigma);
  const Matrix<T> q = critics.target[0].forward(in).cwiseMin(critics.target[1].forward(in));
  const Vector<T> kl = policy.kl_to_prior(batch.s_next, z.z_rho, prior);
  const Matrix<T> v = q - T(alpha) * kl.transpose();
  Matrix<T> y = batch.reward + batch.discount.cwiseProduct(v);
  if (!y.allFinite()) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "non-finite critic target (batch %ld, max |r| %.4g, max KL %.4g, alpha %.4g)",
                  static_cast<long>(batch.size()), static_cast<double>(batch.reward.cwiseAbs().maxCoeff()),
                  static_cast<double>(kl.maxCoeff()), alpha);
    throw TrainingError(buf);
  }
  return y;
}

template <typename T>
double critic_loss(const Critics<T>& critics, const SacBatch<T>& batch, const Matrix<T>& y,
                   std::array<Vector<T>, 2>* grads) {
  const Matrix<T> in = Critics<T>::input(batch.s, batch.z_rho, batch.z_sigma);
  const T inv_b = T(1) / T(2 * batch.size());  // mean over batch, then over the two critics
  double loss = 0.0;
  for (int i = 0; i < 2; ++i) {
    typename nn::Mlp<T>::Cache cache;
    const Matrix<T> diff = critics.online[i].forward(in, cache) - y;
    loss += 0.5 * static_cast<double>(diff.squaredNorm()) / static_cast<double>(batch.size());
    if (grads != nullptr) {
      (*grads)[i].setZero(critics.online[i].num_params());
      critics.online[i].backward(cache, diff * inv_b, &(*grads)[i], false);
    }
  }
  return loss / 2.0;
}

template <typename T>
PolicyLossReport policy_loss(const HighLevelPolicy<T>& policy, const Critics<T>& critics,
                             const skillnet::SkillModel<T>& prior, const Matrix<T>& s, double alpha,
                             const Matrix<T>& xi_rho, const Matrix<T>& xi_sigma, PolicyGrads<T>* grads) {
  using Mat = Matrix<T>;
  using Cache = typename nn::Mlp<T>::Cache;
  const Eigen::Index B = s.cols();
  const int L = policy.latent_dim();
  const T inv_b = T(1) / T(B);
  const T a = T(alpha);

  Cache c_r, c_s, c_ps;
  const Mat out_r = policy.pi_rho().forward(s, c_r);
  const auto d_r = nn::gaussian_head<T>(out_r);
  const Mat z_r = d_r.sample(xi_rho);
  const auto p_r = prior.prior_invariant(s);
  Vector<T> kl = nn::gaussian_kl<T>(d_r, p_r);
  Mat out_s, z_s, out_ps;
  nn::GaussianDist<T> d_s, p_s;
  if (policy.hierarchical()) {
    out_s = policy.pi_sigma().forward(z_r, c_s);
    d_s = nn::gaussian_head<T>(out_s);
    z_s = d_s.sample(xi_sigma);
    out_ps = prior.net("p_sigma").forward(z_r, c_ps);
    p_s = nn::gaussian_head<T>(out_ps);
    kl += nn::gaussian_kl<T>(d_s, p_s);
  } else {
    z_s = Mat(0, B);
  }

  const Mat in = Critics<T>::input(s, z_r, z_s);
  Cache cq[2];
  const Mat q0 = critics.online[0].forward(in, cq[0]);
  const Mat q1 = critics.online[1].forward(in, cq[1]);
  const Mat qmin = q0.cwiseMin(q1);

  PolicyLossReport rep;
  rep.kl = static_cast<double>(kl.mean());
  rep.q = static_cast<double>(qmin.mean());
  rep.loss = alpha * rep.kl - rep.q;
  if (grads == nullptr) return rep;

  // d(-min Q)/d input, routed to whichever critic attains the minimum.
  Mat d_in = Mat::Zero(in.rows(), B);
  for (int i = 0; i < 2; ++i) {
    Mat dy = Mat::Zero(1, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const bool pick = i == 0 ? q0(0, b) <= q1(0, b) : q1(0, b) < q0(0, b);
      if (pick) dy(0, b) = -inv_b;
    }
    d_in += critics.online[i].backward(cq[i], dy, nullptr);
  }
  Mat d_zr = d_in.middleRows(s.rows(), L);
  grads->rho.setZero(policy.pi_rho().num_params());
  if (policy.hierarchical()) {
    grads->sigma.setZero(policy.pi_sigma().num_params());
    const Mat d_zs = d_in.bottomRows(policy.sigma_dim());
    const auto kg = nn::gaussian_kl_grad<T>(d_s, p_s, a * inv_b);
    d_zr += policy.pi_sigma().backward(
        c_s, nn::gaussian_head_backward<T>(out_s, d_zs + kg.d_mean_p, d_zs.cwiseProduct(xi_sigma) + kg.d_std_p),
        &grads->sigma);
    d_zr += prior.net("p_sigma").backward(c_ps, nn::gaussian_head_backward<T>(out_ps, kg.d_mean_q, kg.d_std_q), nullptr);
  } else {
    grads->sigma.resize(0);
  }
  const auto kg = nn::gaussian_kl_grad<T>(d_r, p_r, a * inv_b);
  policy.pi_rho().backward(
      c_r, nn::gaussian_head_backward<T>(out_r, d_zr + kg.d_mean_p, d_zr.cwiseProduct(xi_rho) + kg.d_std_p),
      &grads->rho, false);
  return rep;
}

template struct Critics<float>;
template struct Critics<double>;
template Matrix<float> td_target<float>(const HighLevelPolicy<float>&, const Critics<float>&,
                                        const skillnet::SkillModel<float>&, const SacBatch<float>&, double,
                                        const Matrix<float>&, const Matrix<float>&);
template Matrix<double> td_target<double>(const HighLevelPolicy<double>&, const Critics<double>&,
                                          const skillnet::SkillModel<double>&, const SacBatch<double>&, double,
                                          const Matrix<double>&, const Matrix<double>&);
template double critic_loss<float>(const Critics<float>&, const SacBatch<float>&, const Matrix<float>&,
                                   std::array<Vector<float>, 2>*);
template double critic_loss<double>(const Critics<double>&, const SacBatch<double>&, const Matrix<double>&,
                                    std::array<Vector<double>, 2>*);
template PolicyLossReport policy_loss<float>(const HighLevelPolicy<float>&, const Critics<float>&,
                                             const skillnet::SkillModel<float>&, const Matrix<float>&, double,
                                             const Matrix<float>&, const Matrix<float>&, PolicyGrads<float>*);
template PolicyLossReport policy_loss<double>(const HighLevelPolicy<double>&, const Critics<double>&,
                                              const skillnet::SkillModel<double>&, const Matrix<double>&, double,
                                              const Matrix<double>&, const Matrix<double>&, PolicyGrads<double>*);

namespace {

Critics<float> make_critics(const skillnet::ModelBundle& bundle, const SacConfig& c) {
  const auto& mc = bundle.config();
  Rng rng(derive_seed({c.seed, 0xc217ULL}));
  return Critics<float>(mc.state_dim + mc.latent_dim + mc.sigma_dim(), c.critic_width, c.critic_layers, rng);
}

}  // namespace

SacLearner::SacLearner(const Policy& init, const skillnet::ModelBundle& bundle, const SacConfig& config)
    : policy(init),
      critics(make_critics(bundle, config)),
      log_alpha(std::log(config.init_alpha)),
      opt_pi_rho(config.lr),
      opt_pi_sigma(config.lr),
      opt_q{nn::Adam<float>(config.lr), nn::Adam<float>(config.lr)},
      opt_alpha(config.lr) {
  if (!(config.init_alpha > 0.0)) throw ParameterError("init_alpha must be positive");
}

UpdateStats rl_update(SacLearner& L, const skillnet::SkillModel<float>& prior, const SacBatch<float>& batch,
                      const SacConfig& config, Rng& rng) {
  const Eigen::Index B = batch.size();
  const int ld = L.policy.latent_dim();
  const int sd = L.policy.sigma_dim();
  UpdateStats st;
  st.alpha = L.alpha();

  const Eigen::MatrixXf xr1 = rng.normal_matrix<float>(ld, B);
  const Eigen::MatrixXf xs1 = rng.normal_matrix<float>(sd, B);
  const Eigen::MatrixXf y = td_target<float>(L.policy, L.critics, prior, batch, st.alpha, xr1, xs1);
  std::array<Eigen::VectorXf, 2> gq;
  st.critic_loss = critic_loss<float>(L.critics, batch, y, &gq);
  for (int i = 0; i < 2; ++i) L.opt_q[i].step(L.critics.online[i].params(), gq[i]);

  const Eigen::MatrixXf xr2 = rng.normal_matrix<float>(ld, B);
  const Eigen::MatrixXf xs2 = rng.normal_matrix<float>(sd, B);
  PolicyGrads<float> gp;
  const auto rep = policy_loss<float>(L.policy, L.critics, prior, batch.s, st.alpha, xr2, xs2, &gp);
  L.opt_pi_rho.step(L.policy.pi_rho().params(), gp.rho);
  if (L.policy.hierarchical()) L.opt_pi_sigma.step(L.policy.pi_sigma().params(), gp.sigma);
  st.policy_loss = rep.loss;
  st.kl = rep.kl;

  // Temperature rises while the policy strays further than target_kl from the prior.
  Eigen::VectorXd la(1), ga(1);
  la(0) = L.log_alpha;
  ga(0) = config.target_kl - rep.kl;
  L.opt_alpha.step(la, ga);
  L.log_alpha = std::clamp(la(0), -20.0, 5.0);

  L.critics.soft_update(config.tau);
  return st;
}

ReplayBuffer::ReplayBuffer(long capacity, int state_dim, int rho_dim, int sigma_dim) : capacity_(capacity) {
  if (capacity < 1) throw ParameterError("replay capacity must be >= 1");
  s_.resize(state_dim, capacity);
  s_next_.resize(state_dim, capacity);
  zr_.resize(rho_dim, capacity);
  zs_.resize(sigma_dim, capacity);
  r_.resize(capacity);
  d_.resize(capacity);
}

void ReplayBuffer::add(const Eigen::VectorXf& s, const Eigen::VectorXf& z_rho, const Eigen::VectorXf& z_sigma,
                       float reward, const Eigen::VectorXf& s_next, float discount) {
  s_.col(next_) = s;
  zr_.col(next_) = z_rho;
  if (zs_.rows() > 0) zs_.col(next_) = z_sigma;
  r_(next_) = reward;
  s_next_.col(next_) = s_next;
  d_(next_) = discount;
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

SacBatch<float> ReplayBuffer::sample(int batch_size, Rng& rng) const {
  if (size_ == 0) throw StateError("cannot sample from an empty replay buffer");
  SacBatch<float> b;
  b.s.resize(s_.rows(), batch_size);
  b.s_next.resize(s_.rows(), batch_size);
  b.z_rho.resize(zr_.rows(), batch_size);
  b.z_sigma.resize(zs_.rows(), batch_size);
  b.reward.resize(1, batch_size);
  b.discount.resize(1, batch_size);
  for (int j = 0; j < batch_size; ++j) {
    const auto i = static_cast<Eigen::Index>(rng.integer(0, size_ - 1));
    b.s.col(j) = s_.col(i);
    b.s_next.col(j) = s_next_.col(i);
    b.z_rho.col(j) = zr_.col(i);
    if (zs_.rows() > 0) b.z_sigma.col(j) = zs_.col(i);
    b.reward(0, j) = r_(i);
    b.discount(0, j) = d_(i);
  }
  return b;
}

double EvalPoint::mean() const {
  if (returns.empty()) return 0.0;
  double s = 0.0;
  for (double r : returns) s += r;
  return s / static_cast<double>(returns.size());
}

SacResult run_sac(const Policy& init, const skillnet::ModelBundle& bundle, const envsuite::DomainTask& task,
                  const SacConfig& config, const std::function<void(const CurvePoint&)>& on_curve) {
  if (config.steps < 0 || config.batch_size < 1 || config.curve_interval < 1 || config.eval_interval < 1 ||
      config.eval_episodes < 1 || config.updates_per_transition < 0)
    throw ParameterError("invalid rl config");
  const auto& mc = bundle.config();
  const auto& prior = bundle.model;
  const std::uint64_t dec_hash = skillnet::decoder_hash(prior);
  SacLearner learner(init, bundle, config);
  ReplayBuffer replay(config.replay_capacity, mc.state_dim, mc.latent_dim, mc.sigma_dim());
  Rng rng(derive_seed({config.seed, 0x5acULL}));

  SacResult res;
  auto evaluate = [&](long step) {
    std::vector<EpisodeSpec> eps;
    for (int e = 0; e < config.eval_episodes; ++e)
      eps.push_back({task, derive_seed({config.seed, 0xe7a1ULL, static_cast<std::uint64_t>(e)})});
    EvalPoint p;
    p.env_step = step;
    for (const auto& t : rollout_batch(&learner.policy, bundle, eps)) p.returns.push_back(t.total_return());
    res.evals.push_back(std::move(p));
  };
  evaluate(0);

  long step = 0;
  long next_curve = config.curve_interval;
  long next_eval = config.eval_interval;
  double ret_sum = 0.0;
  int ret_count = 0;
  UpdateStats last;
  std::uint64_t episode = 0;
  while (step < config.steps) {
    const std::uint64_t ep_seed = derive_seed({config.seed, 0xe9ULL, episode++});
    envsuite::EnvState st = envsuite::env_reset(task.domain, task.order, ep_seed);
    double ep_return = 0.0;
    int t = 0;
    while (!st.done && step < config.steps) {
      const Eigen::VectorXf o = envsuite::observe(st);
      const Eigen::VectorXf s = datakit::apply_state_norm(o, bundle.norm);
      const Latents<float> z = learner.policy.sample(s, rng);
      float reward = 0.0f;
      float disc = 1.0f;
      Eigen::VectorXf obs = o;
      for (int i = 0; i < mc.h && !st.done && step < config.steps; ++i, ++t, ++step) {
        const Eigen::MatrixXd a = decode_actions(bundle, obs, z, {action_seed(ep_seed, t)});
        auto r = envsuite::env_step(st, a.col(0), task.domain);
        st = r.state;
        reward += disc * static_cast<float>(r.reward);
        disc *= static_cast<float>(config.gamma);
        ep_return += r.reward;
        obs = envsuite::observe(st);
      }
      const bool terminal = st.active_stage() == envsuite::kNumStages;
      replay.add(s, z.z_rho.col(0), mc.sigma_dim() > 0 ? Eigen::VectorXf(z.z_sigma.col(0)) : Eigen::VectorXf(),
                 reward, datakit::apply_state_norm(obs, bundle.norm), terminal ? 0.0f : disc);
      if (replay.size() >= config.batch_size)
        for (int u = 0; u < config.updates_per_transition; ++u)
          last = rl_update(learner, prior, replay.sample(config.batch_size, rng), config, rng);

      if (st.done) {
        ret_sum += ep_return;
        ++ret_count;
      }
      while (step >= next_curve) {
        const CurvePoint cp{next_curve, ret_count ? ret_sum / ret_count : 0.0, ret_count, learner.alpha(), last.kl,
                            last.critic_loss};
        ret_sum = 0.0;
        ret_count = 0;
        res.curve.push_back(cp);
        if (on_curve) on_curve(cp);
        next_curve += config.curve_interval;
      }
      if (step >= next_eval && step < config.steps) {
        evaluate(step);
        next_eval += config.eval_interval;
      }
    }
  }
  evaluate(step);
  if (skillnet::decoder_hash(prior) != dec_hash) throw ContractError("decoder parameters changed during online training");
  res.policy = learner.policy;
  return res;
}

}  // namespace duskill::downstream
