#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "duskill/diffcore/schedule.hpp"
#include "duskill/error.hpp"
#include "duskill/nn/mlp.hpp"
#include "duskill/rng.hpp"

namespace duskill::diffcore {

using nn::Matrix;

/// x_k = sqrt(abar_k) a0 + sqrt(1 - abar_k) eta, columnwise with one k.
template <typename T>
Matrix<T> forward_noise(const Matrix<T>& a0, int k, const Matrix<T>& eta, const DiffusionSchedule& sched) {
  sched.check_step(k);
  if (a0.rows() != eta.rows() || a0.cols() != eta.cols()) throw ContractError("forward_noise: shape mismatch");
  const double ab = sched.alpha_bar(k);
  return T(std::sqrt(ab)) * a0 + T(std::sqrt(1.0 - ab)) * eta;
}

/// Same, but with a separate step per column (training batches).
template <typename T>
Matrix<T> forward_noise(const Matrix<T>& a0, const std::vector<int>& ks, const Matrix<T>& eta,
                        const DiffusionSchedule& sched) {
  if (a0.rows() != eta.rows() || a0.cols() != eta.cols()) throw ContractError("forward_noise: shape mismatch");
  if (ks.size() != static_cast<std::size_t>(a0.cols())) throw ContractError("forward_noise: one step per column");
  Matrix<T> x(a0.rows(), a0.cols());
  for (Eigen::Index j = 0; j < a0.cols(); ++j) {
    const int k = ks[static_cast<std::size_t>(j)];
    sched.check_step(k);
    const double ab = sched.alpha_bar(k);
    x.col(j) = T(std::sqrt(ab)) * a0.col(j) + T(std::sqrt(1.0 - ab)) * eta.col(j);
  }
  return x;
}

/// Noise predictor signature: (x_k, k, s_t, z) -> eta_hat, columns are samples.
template <typename T>
using NoiseFn = std::function<Matrix<T>(const Matrix<T>& x, int k, const Matrix<T>& s, const Matrix<T>& z)>;

/// (1 - delta) eps_rho(x, k, s, z_rho) + delta eps_sigma(x, k, s, z_sigma).
template <typename T>
Matrix<T> guided_predict(const Matrix<T>& x, int k, const Matrix<T>& s, const Matrix<T>& z_rho,
                         const Matrix<T>& z_sigma, double delta, const NoiseFn<T>& eps_rho,
                         const NoiseFn<T>& eps_sigma) {
  if (!(delta >= 0.0)) throw ParameterError("guidance weight must be >= 0");
  Matrix<T> u = eps_rho(x, k, s, z_rho);
  Matrix<T> v = eps_sigma(x, k, s, z_sigma);
  if (u.rows() != v.rows() || u.cols() != v.cols())
    throw ContractError("guided_predict: decoder outputs differ in shape (" + std::to_string(u.rows()) + "x" +
                        std::to_string(u.cols()) + " vs " + std::to_string(v.rows()) + "x" +
                        std::to_string(v.cols()) + ")");
  if (u.rows() != x.rows() || u.cols() != x.cols())
    throw ContractError("guided_predict: decoder output does not match the action shape");
  if (delta == 0.0) return u;
  if (delta == 1.0) return v;
  return T(1.0 - delta) * u + T(delta) * v;
}

/// Deterministic DDPM reverse step (zeta = 0).
template <typename T>
Matrix<T> reverse_step(const Matrix<T>& x, int k, const Matrix<T>& eta_hat, const DiffusionSchedule& sched) {
  sched.check_step(k);
  if (x.rows() != eta_hat.rows() || x.cols() != eta_hat.cols()) throw ContractError("reverse_step: shape mismatch");
  const double a = sched.alpha(k);
  const double coef = (1.0 - a) / std::sqrt(1.0 - sched.alpha_bar(k));
  return T(1.0 / std::sqrt(a)) * (x - T(coef) * eta_hat);
}

/// Predictor of the full guided noise at step k given the current iterate.
template <typename T>
using StepPredictor = std::function<Matrix<T>(const Matrix<T>& x, int k)>;

/// Runs k = K..1 from x_K and clamps the final iterate to [-1, 1].
/// Throws SamplingError naming the step if anything becomes non-finite.
template <typename T>
Matrix<T> denoise(Matrix<T> x, const StepPredictor<T>& predict, const DiffusionSchedule& sched) {
  for (int k = sched.K(); k >= 1; --k) {
    Matrix<T> eta_hat = predict(x, k);
    if (!eta_hat.allFinite()) throw SamplingError("non-finite noise prediction at diffusion step " + std::to_string(k));
    x = reverse_step(x, k, eta_hat, sched);
    if (!x.allFinite()) throw SamplingError("non-finite iterate after diffusion step " + std::to_string(k));
  }
  return x.cwiseMax(T(-1)).cwiseMin(T(1));
}

/// Initial noise x_K; column j is drawn from its own seed so batched and
/// one-at-a-time sampling agree.
template <typename T>
Matrix<T> initial_noise(Eigen::Index action_dim, const std::vector<std::uint64_t>& seeds) {
  Matrix<T> x(action_dim, static_cast<Eigen::Index>(seeds.size()));
  for (std::size_t j = 0; j < seeds.size(); ++j) {
    Rng rng(derive_seed({seeds[j], 0xd1ffULL}));
    x.col(static_cast<Eigen::Index>(j)) = rng.normal_matrix<T>(action_dim, 1);
  }
  return x;
}

/// Pair of split decoders.
template <typename T>
struct SplitDecoders {
  NoiseFn<T> eps_rho;
  NoiseFn<T> eps_sigma;
};

/// Guided reverse sampling of normalized actions, one column per seed.
/// The result lies in [-1, 1]; callers de-normalize with their NormStats.
template <typename T>
Matrix<T> sample_action(const Matrix<T>& s, const Matrix<T>& z_rho, const Matrix<T>& z_sigma,
                        const DiffusionSchedule& sched, double delta, const SplitDecoders<T>& dec,
                        Eigen::Index action_dim, const std::vector<std::uint64_t>& seeds) {
  if (s.cols() != static_cast<Eigen::Index>(seeds.size()) || z_rho.cols() != s.cols() || z_sigma.cols() != s.cols())
    throw ContractError("sample_action: batch sizes of states, latents and seeds differ");
  StepPredictor<T> predict = [&](const Matrix<T>& x, int k) {
    return guided_predict<T>(x, k, s, z_rho, z_sigma, delta, dec.eps_rho, dec.eps_sigma);
  };
  return denoise<T>(initial_noise<T>(action_dim, seeds), predict, sched);
}

}  // namespace duskill::diffcore
