#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "json.hpp"

#include "duskill/downstream/fewshot.hpp"
#include "duskill/downstream/policy.hpp"
#include "duskill/downstream/rollout.hpp"
#include "duskill/skillnet/trainer.hpp"

namespace duskill::downstream {

/// Prior-regularized soft actor-critic over skill latents.
struct SacConfig {
  long steps = 300000;  // environment steps
  int batch_size = 64;
  double lr = 3e-4;
  double gamma = 0.99;  // per environment step; a skill window discounts by gamma^n
  double tau = 5e-3;
  long replay_capacity = 100000;
  double target_kl = 5.0;
  double init_alpha = 0.1;
  int critic_width = 128;
  int critic_layers = 5;
  int updates_per_transition = 1;
  int curve_interval = 1000;   // environment steps between curve points
  long eval_interval = 10000;  // environment steps between evaluations
  int eval_episodes = 10;
  std::uint64_t seed = 0;

  bool operator==(const SacConfig&) const = default;
};

nlohmann::json to_json(const SacConfig& c);
SacConfig sac_config_from_json(const nlohmann::json& j);

/// Twin Q(s, z_rho, z_sigma) networks and their slow-moving targets.
template <typename T>
struct Critics {
  std::array<nn::Mlp<T>, 2> online;
  std::array<nn::Mlp<T>, 2> target;

  Critics() = default;
  Critics(int input_dim, int width, int layers, Rng& rng);

  static Matrix<T> input(const Matrix<T>& s, const Matrix<T>& z_rho, const Matrix<T>& z_sigma);
  /// Polyak averaging: target <- (1 - tau) target + tau online.
  void soft_update(double tau);

  template <typename U>
  Critics<U> cast() const {
    Critics<U> c;
    for (int i = 0; i < 2; ++i) {
      c.online[i] = online[i].template cast<U>();
      c.target[i] = target[i].template cast<U>();
    }
    return c;
  }
};

/// One high-level (skill window) transition per column.
template <typename T>
struct SacBatch {
  Matrix<T> s;         // normalized state at the window start
  Matrix<T> z_rho;
  Matrix<T> z_sigma;
  Matrix<T> reward;    // 1 x B, discounted sum over the window
  Matrix<T> s_next;
  Matrix<T> discount;  // 1 x B, gamma^n, zero for terminal windows

  Eigen::Index size() const { return s.cols(); }
};

/// r + discount * (min_j Qtarget_j(s', z') - alpha * KL(pi(.|s') || prior(.|s'))), z' ~ pi(s')
/// drawn with the given unit noise.
template <typename T>
Matrix<T> td_target(const HighLevelPolicy<T>& policy, const Critics<T>& critics, const skillnet::SkillModel<T>& prior,
                    const SacBatch<T>& batch, double alpha, const Matrix<T>& xi_rho, const Matrix<T>& xi_sigma);

/// Mean over both critics of 0.5 (Q_j - y)^2; gradients per online critic.
template <typename T>
double critic_loss(const Critics<T>& critics, const SacBatch<T>& batch, const Matrix<T>& y,
                   std::array<Vector<T>, 2>* grads = nullptr);

struct PolicyLossReport {
  double loss = 0.0;
  double kl = 0.0;     // mean KL(pi || prior)
  double q = 0.0;      // mean min-Q of the sampled latents
};

/// mean_b [alpha KL(pi(.|s) || prior(.|s)) - min_j Q_j(s, z)], z reparameterized with the given noise.
template <typename T>
PolicyLossReport policy_loss(const HighLevelPolicy<T>& policy, const Critics<T>& critics,
                             const skillnet::SkillModel<T>& prior, const Matrix<T>& s, double alpha,
                             const Matrix<T>& xi_rho, const Matrix<T>& xi_sigma, PolicyGrads<T>* grads = nullptr);

/// Learner state for the online phase.
struct SacLearner {
  Policy policy;
  Critics<float> critics;
  double log_alpha = 0.0;
  nn::Adam<float> opt_pi_rho, opt_pi_sigma;
  std::array<nn::Adam<float>, 2> opt_q;
  nn::Adam<double> opt_alpha;

  SacLearner(const Policy& init, const skillnet::ModelBundle& bundle, const SacConfig& config);
  double alpha() const { return std::exp(log_alpha); }
};

struct UpdateStats {
  double critic_loss = 0.0;
  double policy_loss = 0.0;
  double kl = 0.0;
  double alpha = 0.0;
};

/// Critic step, policy step, temperature step, then target averaging.
/// Deterministic given (learner, batch, rng state).
UpdateStats rl_update(SacLearner& learner, const skillnet::SkillModel<float>& prior, const SacBatch<float>& batch,
                      const SacConfig& config, Rng& rng);

/// Fixed-capacity ring buffer of high-level transitions.
class ReplayBuffer {
 public:
  ReplayBuffer(long capacity, int state_dim, int rho_dim, int sigma_dim);
  void add(const Eigen::VectorXf& s, const Eigen::VectorXf& z_rho, const Eigen::VectorXf& z_sigma, float reward,
           const Eigen::VectorXf& s_next, float discount);
  long size() const { return size_; }
  SacBatch<float> sample(int batch_size, Rng& rng) const;

 private:
  long capacity_;
  long size_ = 0;
  long next_ = 0;
  Eigen::MatrixXf s_, zr_, zs_, s_next_;
  Eigen::RowVectorXf r_, d_;
};

struct CurvePoint {
  long env_step = 0;
  double mean_return = 0.0;  // training episodes finished since the previous point
  int episodes = 0;
  double alpha = 0.0;
  double kl = 0.0;
  double critic_loss = 0.0;
};

struct EvalPoint {
  long env_step = 0;
  std::vector<double> returns;
  double mean() const;
};

struct SacResult {
  Policy policy;
  std::vector<CurvePoint> curve;
  std::vector<EvalPoint> evals;
};

/// Online training on one task from an initial (usually warm-started)
/// policy. Evaluations use `eval_episodes` fixed seeds at step 0, every
/// `eval_interval` steps, and at the end.
SacResult run_sac(const Policy& init, const skillnet::ModelBundle& bundle, const envsuite::DomainTask& task,
                  const SacConfig& config, const std::function<void(const CurvePoint&)>& on_curve = {});

}  // namespace duskill::downstream
