#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "duskill/diffcore/diffusion.hpp"
#include "duskill/diffcore/schedule.hpp"
#include "duskill/nn/gaussian.hpp"
#include "duskill/nn/mlp.hpp"

namespace duskill::skillnet {

using nn::GaussianDist;
using nn::Matrix;
using nn::Vector;

enum class Variant { DuSkill, HDU, DU, SPiRLc, BC };

/// How a diffusion decoder network's raw output becomes a noise prediction.
/// Noise: the output is eta_hat itself. Sample: the output f estimates the
/// clean action and eta_hat = (x_k - sqrt(abar_k) f) / sqrt(1 - abar_k).
enum class DecoderHead { Noise, Sample };

std::string to_string(Variant v);
/// Accepts "duskill", "hdu", "du", "spirlc", "bc" (case-insensitive). ParameterError otherwise.
Variant parse_variant(const std::string& name);

/// Architecture and loss weights of a skill model.
struct ModelConfig {
  Variant variant = Variant::DuSkill;
  int state_dim = 8;
  int action_dim = 2;
  int omega_dim = 7;
  int h = 10;
  int latent_dim = 32;
  int time_embed_dim = 16;
  int hidden_width = 128;
  int hidden_layers = 5;
  double beta_rho = 5e-4;
  double beta_sigma = 1e-4;
  double delta = 0.5;
  DecoderHead decoder_head = DecoderHead::Noise;
  double encoder_init_std = 0.05;  // initial posterior std of the encoders (0 keeps the plain init)
  diffcore::ScheduleSpec schedule;
  std::uint64_t init_seed = 0;

  bool operator==(const ModelConfig&) const = default;

  /// Whether the variant has a second (domain-variant) latent.
  bool hierarchical() const { return variant == Variant::DuSkill || variant == Variant::HDU; }
  bool diffusion() const { return variant == Variant::DuSkill || variant == Variant::HDU || variant == Variant::DU; }
  bool has_priors() const { return variant != Variant::BC; }
  int window_dim() const { return h * (state_dim + action_dim); }
  int sigma_dim() const { return hierarchical() ? latent_dim : 0; }
};

nlohmann::json to_json(const ModelConfig& c);
/// Rejects unknown keys.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Sinusoidal features of a diffusion step, `dim` rows, one column per entry.
template <typename T>
Matrix<T> time_embedding(const std::vector<int>& ks, int dim);

/// A mini-batch of normalized segments. Column b*h + t of the step
/// matrices is step t of segment b.
template <typename T>
struct Batch {
  Matrix<T> window;       // h*(state_dim+action_dim) x B, per step [s_t; a_t] stacked
  Matrix<T> first_state;  // state_dim x B
  Matrix<T> states;       // state_dim x B*h
  Matrix<T> actions;      // action_dim x B*h
  Matrix<T> omega;        // omega_dim x B

  Eigen::Index size() const { return first_state.cols(); }
  template <typename U>
  Batch<U> cast() const {
    return {window.template cast<U>(), first_state.template cast<U>(), states.template cast<U>(),
            actions.template cast<U>(), omega.template cast<U>()};
  }
};

/// Every random quantity a loss evaluation consumes, drawn up front so a
/// loss is a pure function of (parameters, batch, draw).
template <typename T>
struct NoiseDraw {
  Matrix<T> xi_rho;    // latent x B
  Matrix<T> xi_sigma;  // latent x B (empty for single-latent variants)
  std::vector<int> ks; // one diffusion step per action column
  Matrix<T> eta;       // action_dim x B*h

  template <typename U>
  NoiseDraw<U> cast() const {
    return {xi_rho.template cast<U>(), xi_sigma.template cast<U>(), ks, eta.template cast<U>()};
  }
};

struct LossReport {
  double rec = 0.0;
  double kl_rho = 0.0;
  double kl_sigma = 0.0;
  double prior_rho = 0.0;
  double prior_sigma = 0.0;
  double total = 0.0;
  double beta_rho = 0.0;
  double beta_sigma = 0.0;

  double prior() const { return prior_rho + prior_sigma; }
  bool operator==(const LossReport&) const = default;
};

nlohmann::json to_json(const LossReport& r);

/// Network name -> gradient, same layout as the network's parameters.
template <typename T>
using Grads = std::map<std::string, Vector<T>>;

/// Network names by role.
inline const std::vector<std::string> kEncoderNets{"q_rho", "q_sigma"};
inline const std::vector<std::string> kPriorNets{"p_rho", "p_sigma"};
inline const std::vector<std::string> kDecoderNets{"eps_rho", "eps_sigma", "eps", "decoder", "bc"};

/// The networks of one variant plus the forward/backward passes of its
/// losses. Which networks exist depends on the variant:
///   DuSkill: q_rho, q_sigma, p_rho, p_sigma, eps_rho, eps_sigma
///   HDU:     q_rho, q_sigma, p_rho, p_sigma, eps (sees both latents)
///   DU:      q_rho, p_rho, eps
///   SPiRLc:  q_rho, p_rho, decoder (feed-forward s, z -> a)
///   BC:      bc (s -> a)
template <typename T>
class SkillModel {
 public:
  using Mat = Matrix<T>;
  using Vec = Vector<T>;
  using Net = nn::Mlp<T>;

  SkillModel() = default;
  explicit SkillModel(const ModelConfig& config);
  /// Adopts existing networks (checkpoint load, precision casts).
  SkillModel(const ModelConfig& config, std::map<std::string, Net> nets);

  const ModelConfig& config() const { return config_; }
  const diffcore::DiffusionSchedule& schedule() const { return schedule_; }

  bool has(const std::string& name) const { return nets_.count(name) != 0; }
  const Net& net(const std::string& name) const;
  Net& net(const std::string& name);
  const std::map<std::string, Net>& nets() const { return nets_; }
  std::vector<std::string> names() const;

  /// Expected shape of each network of a variant.
  static std::map<std::string, nn::MlpShape> shapes(const ModelConfig& config);

  GaussianDist<T> encode_invariant(const Mat& window) const;
  GaussianDist<T> encode_variant(const Mat& z_rho, const Mat& omega) const;
  GaussianDist<T> prior_invariant(const Mat& s) const;
  GaussianDist<T> prior_variant(const Mat& z_rho) const;

  /// Individual noise predictors. eps_rho/eps_sigma for DuSkill; the joint
  /// `eps` takes [z_rho; z_sigma] for HDU and z_rho for DU.
  Mat noise_rho(const Mat& x, int k, const Mat& s, const Mat& z_rho) const;
  Mat noise_sigma(const Mat& x, int k, const Mat& s, const Mat& z_sigma) const;
  Mat noise_joint(const Mat& x, int k, const Mat& s, const Mat& z) const;

  /// Noise prediction of diffusion network `name` on columns (x, k, s, z),
  /// recording activations in `cache` when non-null.
  Mat decoder_noise(const std::string& name, const Mat& x, const std::vector<int>& ks, const Mat& s, const Mat& z,
                    typename Net::Cache* cache = nullptr) const;
  /// Backpropagates d loss / d eta_hat of a decoder_noise call. Accumulates
  /// parameter gradients into `grad` when non-null; returns d loss / d z.
  Mat decoder_noise_backward(const std::string& name, const typename Net::Cache& cache, const std::vector<int>& ks,
                             const Mat& d_eta, Vec* grad) const;

  /// Combined noise prediction at step k used by the reverse process.
  Mat predict_noise(const Mat& x, int k, const Mat& s, const Mat& z_rho, const Mat& z_sigma) const;

  /// Normalized actions in [-1, 1] for each column of s. Diffusion
  /// variants sample with one seed per column; the others are deterministic.
  Mat act(const Mat& s, const Mat& z_rho, const Mat& z_sigma, const std::vector<std::uint64_t>& seeds) const;

  /// Evaluates every loss of the variant. When `grads` is non-null the
  /// parameter gradients are written into it: encoder and decoder entries
  /// hold d total / d params, prior entries hold d (prior loss) / d params.
  /// Encoder outputs are constants inside the prior loss.
  LossReport losses(const Batch<T>& batch, const NoiseDraw<T>& draw, Grads<T>* grads = nullptr) const;

  /// Draws the noise a `losses` call needs for this batch.
  NoiseDraw<T> draw_noise(Eigen::Index batch_size, Rng& rng) const;

  template <typename U>
  SkillModel<U> cast() const {
    std::map<std::string, nn::Mlp<U>> out;
    for (const auto& [name, n] : nets_) out.emplace(name, n.template cast<U>());
    return SkillModel<U>(config_, std::move(out));
  }

 private:
  Mat decoder_input(const Mat& x, const std::vector<int>& ks, const Mat& s, const Mat& z) const;

  ModelConfig config_;
  diffcore::DiffusionSchedule schedule_;
  std::map<std::string, Net> nets_;
};

/// Repeats each column `times` times (segment latent -> per-step latent).
template <typename T>
Matrix<T> repeat_columns(const Matrix<T>& m, int times);
/// Inverse of repeat_columns for gradients: sums each group of `times` columns.
template <typename T>
Matrix<T> sum_column_groups(const Matrix<T>& m, int times);

}  // namespace duskill::skillnet
