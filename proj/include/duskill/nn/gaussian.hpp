#pragma once

#include <cmath>

#include <Eigen/Core>

#include "duskill/error.hpp"
#include "duskill/nn/mlp.hpp"

namespace duskill::nn {

/// Lower bound added to every predicted standard deviation.
inline constexpr double kStdFloor = 1e-4;

/// Batch of diagonal Gaussians; column j is one distribution.
template <typename T>
struct GaussianDist {
  Matrix<T> mean;
  Matrix<T> std;

  Eigen::Index dim() const { return mean.rows(); }
  Eigen::Index batch() const { return mean.cols(); }

  /// Reparameterized draw mean + std * noise.
  Matrix<T> sample(const Matrix<T>& noise) const { return mean + std.cwiseProduct(noise); }

  /// Sum of per-dimension log densities, one value per column.
  Vector<T> log_prob(const Matrix<T>& z) const {
    const T half_log_2pi = T(0.5 * std::log(2.0 * M_PI));
    Matrix<T> u = (z - mean).cwiseQuotient(std);
    Matrix<T> lp = (-T(0.5) * u.array().square() - std.array().log() - half_log_2pi).matrix();
    return lp.colwise().sum().transpose();
  }
};

template <typename T>
T softplus(T v) {
  return v > T(20) ? v : std::log1p(std::exp(v));
}

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

/// Splits a network output of 2d rows into mean (first d rows) and
/// std = softplus(raw) + floor (last d rows).
template <typename T>
GaussianDist<T> gaussian_head(const Matrix<T>& out) {
  if (out.rows() % 2 != 0) throw ContractError("Gaussian head needs an even number of output rows");
  const Eigen::Index d = out.rows() / 2;
  GaussianDist<T> g;
  g.mean = out.topRows(d);
  g.std = out.bottomRows(d).unaryExpr([](T v) { return softplus(v) + T(kStdFloor); });
  return g;
}

/// Maps (d loss / d mean, d loss / d std) back onto the raw head output.
template <typename T>
Matrix<T> gaussian_head_backward(const Matrix<T>& out, const Matrix<T>& d_mean, const Matrix<T>& d_std) {
  const Eigen::Index d = out.rows() / 2;
  Matrix<T> g(out.rows(), out.cols());
  g.topRows(d) = d_mean;
  g.bottomRows(d) = d_std.cwiseProduct(out.bottomRows(d).unaryExpr([](T v) { return sigmoid(v); }));
  return g;
}

/// Raw head value whose softplus(.) + floor equals `std`.
inline double inverse_head_std(double std) { return std::log(std::expm1(std - kStdFloor)); }

/// Per-column KL(p || q) for diagonal Gaussians.
template <typename T>
Vector<T> gaussian_kl(const GaussianDist<T>& p, const GaussianDist<T>& q) {
  if (p.mean.rows() != q.mean.rows() || p.mean.cols() != q.mean.cols())
    throw ContractError("gaussian_kl: dimension mismatch");
  if ((p.std.array() <= T(0)).any() || (q.std.array() <= T(0)).any())
    throw ContractError("gaussian_kl: standard deviations must be positive");
  auto vp = p.std.array().square();
  auto vq = q.std.array().square();
  auto dm = (p.mean - q.mean).array().square();
  Matrix<T> kl = ((q.std.array() / p.std.array()).log() + (vp + dm) / (T(2) * vq) - T(0.5)).matrix();
  return kl.colwise().sum().transpose();
}

/// Gradients of sum_j scale[j] * KL(p_j || q_j) with respect to both
/// distributions' parameters.
template <typename T>
struct KlGrad {
  Matrix<T> d_mean_p, d_std_p, d_mean_q, d_std_q;
};

template <typename T>
KlGrad<T> gaussian_kl_grad(const GaussianDist<T>& p, const GaussianDist<T>& q, T scale) {
  KlGrad<T> g;
  const auto vq = q.std.array().square();
  const auto diff = (p.mean - q.mean).array();
  g.d_mean_p = (scale * diff / vq).matrix();
  g.d_mean_q = -g.d_mean_p;
  g.d_std_p = (scale * (-T(1) / p.std.array() + p.std.array() / vq)).matrix();
  g.d_std_q = (scale * (T(1) / q.std.array() - (p.std.array().square() + diff.square()) / (vq * q.std.array())))
                  .matrix();
  return g;
}

/// Unit Gaussian with the same shape as `like`.
template <typename T>
GaussianDist<T> standard_normal_like(Eigen::Index dim, Eigen::Index batch) {
  GaussianDist<T> g;
  g.mean = Matrix<T>::Zero(dim, batch);
  g.std = Matrix<T>::Ones(dim, batch);
  return g;
}

}  // namespace duskill::nn
