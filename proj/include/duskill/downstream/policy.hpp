#pragma once

#include <cstdint>
#include <optional>

#include "duskill/nn/gaussian.hpp"
#include "duskill/nn/mlp.hpp"
#include "duskill/skillnet/model.hpp"
#include "duskill/skillnet/trainer.hpp"

namespace duskill::downstream {

using nn::GaussianDist;
using nn::Matrix;
using nn::Vector;

/// Latent pair for a batch; z_sigma has zero rows for single-latent variants.
template <typename T>
struct Latents {
  Matrix<T> z_rho;
  Matrix<T> z_sigma;
};

/// pi(z_rho, z_sigma | s) = pi_rho(z_rho | s) pi_sigma(z_sigma | z_rho).
/// Single-latent variants (DU, SPiRLc) carry only pi_rho.
template <typename T>
class HighLevelPolicy {
 public:
  HighLevelPolicy() = default;
  HighLevelPolicy(nn::Mlp<T> pi_rho, std::optional<nn::Mlp<T>> pi_sigma)
      : pi_rho_(std::move(pi_rho)), pi_sigma_(std::move(pi_sigma)) {}

  bool hierarchical() const { return pi_sigma_.has_value(); }
  int latent_dim() const { return pi_rho_.output_dim() / 2; }
  int sigma_dim() const { return hierarchical() ? pi_sigma_->output_dim() / 2 : 0; }

  nn::Mlp<T>& pi_rho() { return pi_rho_; }
  const nn::Mlp<T>& pi_rho() const { return pi_rho_; }
  nn::Mlp<T>& pi_sigma() {
    if (!pi_sigma_) throw UnsupportedVariantError("policy has no domain-variant head");
    return *pi_sigma_;
  }
  const nn::Mlp<T>& pi_sigma() const {
    if (!pi_sigma_) throw UnsupportedVariantError("policy has no domain-variant head");
    return *pi_sigma_;
  }

  GaussianDist<T> dist_rho(const Matrix<T>& s) const { return nn::gaussian_head<T>(pi_rho_.forward(s)); }
  GaussianDist<T> dist_sigma(const Matrix<T>& z_rho) const { return nn::gaussian_head<T>(pi_sigma().forward(z_rho)); }

  /// Reparameterized draw from given unit-Gaussian noise.
  Latents<T> sample(const Matrix<T>& s, const Matrix<T>& xi_rho, const Matrix<T>& xi_sigma) const {
    Latents<T> z;
    z.z_rho = dist_rho(s).sample(xi_rho);
    z.z_sigma = hierarchical() ? dist_sigma(z.z_rho).sample(xi_sigma) : Matrix<T>(0, s.cols());
    return z;
  }

  Latents<T> sample(const Matrix<T>& s, Rng& rng) const {
    const Matrix<T> xr = rng.normal_matrix<T>(latent_dim(), s.cols());
    const Matrix<T> xs = hierarchical() ? rng.normal_matrix<T>(sigma_dim(), s.cols()) : Matrix<T>(0, s.cols());
    return sample(s, xr, xs);
  }

  /// Means of both levels (z_sigma evaluated at the z_rho mean).
  Latents<T> mode(const Matrix<T>& s) const {
    Latents<T> z;
    z.z_rho = dist_rho(s).mean;
    z.z_sigma = hierarchical() ? dist_sigma(z.z_rho).mean : Matrix<T>(0, s.cols());
    return z;
  }

  Vector<T> log_prob_rho(const Matrix<T>& s, const Matrix<T>& z_rho) const { return dist_rho(s).log_prob(z_rho); }
  Vector<T> log_prob_sigma(const Matrix<T>& z_rho, const Matrix<T>& z_sigma) const {
    return dist_sigma(z_rho).log_prob(z_sigma);
  }
  /// Joint log-density, evaluated as one Gaussian over the stacked latent
  /// with the conditional parameters of each level.
  Vector<T> log_prob(const Matrix<T>& s, const Latents<T>& z) const {
    if (!hierarchical()) return log_prob_rho(s, z.z_rho);
    const auto r = dist_rho(s);
    const auto q = dist_sigma(z.z_rho);
    GaussianDist<T> joint;
    joint.mean.resize(r.dim() + q.dim(), s.cols());
    joint.mean << r.mean, q.mean;
    joint.std.resize(r.dim() + q.dim(), s.cols());
    joint.std << r.std, q.std;
    Matrix<T> zz(r.dim() + q.dim(), s.cols());
    zz << z.z_rho, z.z_sigma;
    return joint.log_prob(zz);
  }

  /// KL(pi || prior) at the given states; the variant level is compared
  /// at the supplied z_rho.
  Vector<T> kl_to_prior(const Matrix<T>& s, const Matrix<T>& z_rho, const skillnet::SkillModel<T>& prior) const {
    Vector<T> kl = nn::gaussian_kl<T>(dist_rho(s), prior.prior_invariant(s));
    if (hierarchical()) kl += nn::gaussian_kl<T>(dist_sigma(z_rho), prior.prior_variant(z_rho));
    return kl;
  }

  std::uint64_t hash() const {
    Fnv1a h;
    const auto a = nn::hash_params(pi_rho_.params());
    h.update(&a, sizeof(a));
    if (pi_sigma_) {
      const auto b = nn::hash_params(pi_sigma_->params());
      h.update(&b, sizeof(b));
    }
    return h.digest();
  }

  template <typename U>
  HighLevelPolicy<U> cast() const {
    std::optional<nn::Mlp<U>> s;
    if (pi_sigma_) s = pi_sigma_->template cast<U>();
    return HighLevelPolicy<U>(pi_rho_.template cast<U>(), std::move(s));
  }

 private:
  nn::Mlp<T> pi_rho_;
  std::optional<nn::Mlp<T>> pi_sigma_;
};

using Policy = HighLevelPolicy<float>;

/// Copies the skill priors into a fresh policy. UnsupportedVariantError for
/// variants without priors (BC).
template <typename T>
HighLevelPolicy<T> init_policy(const skillnet::SkillModel<T>& model) {
  if (!model.config().has_priors())
    throw UnsupportedVariantError("variant " + skillnet::to_string(model.config().variant) +
                                  " has no skill prior to initialize a policy from");
  std::optional<nn::Mlp<T>> s;
  if (model.config().hierarchical()) s = model.net("p_sigma");
  return HighLevelPolicy<T>(model.net("p_rho"), std::move(s));
}

inline Policy init_policy(const skillnet::ModelBundle& bundle) { return init_policy<float>(bundle.model); }

}  // namespace duskill::downstream
