#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "duskill/error.hpp"
#include "duskill/rng.hpp"

namespace duskill::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Layer widths of a fully connected network: input, hidden..., output.
struct MlpShape {
  int input = 0;
  std::vector<int> hidden;
  int output = 0;

  bool operator==(const MlpShape&) const = default;
};

inline MlpShape make_shape(int input, int width, int layers, int output) {
  return MlpShape{input, std::vector<int>(static_cast<std::size_t>(layers), width), output};
}

/// Multilayer perceptron with SiLU hidden activations and a linear output.
///
/// Samples are columns: `forward` maps an (input x batch) matrix to
/// (output x batch). All weights and biases live in one flat parameter
/// vector so optimizers, hashing, copying and finite-difference probes can
/// treat a network as a single vector. Gradients use the same layout.
template <typename T>
class Mlp {
 public:
  using Mat = Matrix<T>;
  using Vec = Vector<T>;

  /// Intermediate values from a forward pass, consumed by `backward`.
  struct Cache {
    std::vector<Mat> inputs;  // input of each linear layer
    std::vector<Mat> pre;     // pre-activation of each hidden layer
    std::vector<Mat> sig;     // sigmoid of each pre-activation
  };

  Mlp() = default;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization for weights and biases.
  Mlp(const MlpShape& shape, Rng& rng) : shape_(shape) {
    layout();
    params_.resize(num_params_);
    for (const auto& l : layers_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(l.in) * l.out; ++i)
        params_[l.w_off + i] = static_cast<T>(rng.uniform(-bound, bound));
      for (int i = 0; i < l.out; ++i) params_[l.b_off + i] = static_cast<T>(rng.uniform(-bound, bound));
    }
  }

  /// Builds a network from an existing parameter vector (e.g. loaded from disk).
  Mlp(const MlpShape& shape, Vec params) : shape_(shape) {
    layout();
    if (params.size() != num_params_)
      throw ContractError("parameter vector size " + std::to_string(params.size()) + " does not match shape (" +
                          std::to_string(num_params_) + ")");
    params_ = std::move(params);
  }

  const MlpShape& shape() const { return shape_; }
  int input_dim() const { return shape_.input; }
  int output_dim() const { return shape_.output; }
  Eigen::Index num_params() const { return num_params_; }
  std::size_t num_layers() const { return layers_.size(); }

  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  Eigen::Map<const Mat> weight(std::size_t l) const {
    return Eigen::Map<const Mat>(params_.data() + layers_[l].w_off, layers_[l].out, layers_[l].in);
  }
  Eigen::Map<Mat> weight(std::size_t l) {
    return Eigen::Map<Mat>(params_.data() + layers_[l].w_off, layers_[l].out, layers_[l].in);
  }
  Eigen::Map<const Vec> bias(std::size_t l) const {
    return Eigen::Map<const Vec>(params_.data() + layers_[l].b_off, layers_[l].out);
  }
  Eigen::Map<Vec> bias(std::size_t l) {
    return Eigen::Map<Vec>(params_.data() + layers_[l].b_off, layers_[l].out);
  }

  /// Zeroes the output layer's weights and biases.
  void zero_output_layer() {
    weight(layers_.size() - 1).setZero();
    bias(layers_.size() - 1).setZero();
  }

  Mat forward(const Mat& x) const {
    check_input(x);
    Mat h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Mat z = weight(l) * h;
      z.colwise() += bias(l);
      if (l + 1 < layers_.size()) {
        h = (z.array() / (T(1) + (-z.array()).exp())).matrix();
      } else {
        return z;
      }
    }
    return h;
  }

  Mat forward(const Mat& x, Cache& cache) const {
    check_input(x);
    cache.inputs.resize(layers_.size());
    cache.pre.resize(layers_.size() - 1);
    cache.sig.resize(layers_.size() - 1);
    cache.inputs[0] = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Mat z = weight(l) * cache.inputs[l];
      z.colwise() += bias(l);
      if (l + 1 < layers_.size()) {
        cache.sig[l] = (T(1) / (T(1) + (-z.array()).exp())).matrix();
        cache.inputs[l + 1] = z.cwiseProduct(cache.sig[l]);
        cache.pre[l] = std::move(z);
      } else {
        return z;
      }
    }
    return Mat();
  }

  /// Backpropagates `dy` (d loss / d output). Parameter gradients are
  /// accumulated into `grad` when it is non-null. Returns d loss / d input
  /// unless `need_input_grad` is false (then an empty matrix).
  Mat backward(const Cache& cache, const Mat& dy, Vec* grad, bool need_input_grad = true) const {
    if (grad != nullptr && grad->size() != num_params_) {
      if (grad->size() != 0) throw ContractError("gradient buffer has wrong size");
      grad->setZero(num_params_);
    }
    Mat d = dy;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& l = layers_[li];
      if (li + 1 < layers_.size()) {
        const auto z = cache.pre[li].array();
        const auto sg = cache.sig[li].array();
        d.array() *= sg * (T(1) + z * (T(1) - sg));
      }
      if (grad != nullptr) {
        Eigen::Map<Mat>(grad->data() + l.w_off, l.out, l.in).noalias() += d * cache.inputs[li].transpose();
        Eigen::Map<Vec>(grad->data() + l.b_off, l.out) += d.rowwise().sum();
      }
      if (li == 0 && !need_input_grad) return Mat();
      d = weight(li).transpose() * d;
    }
    return d;
  }

  template <typename U>
  Mlp<U> cast() const {
    return Mlp<U>(shape_, params_.template cast<U>().eval());
  }

  static T silu(T v) { return v / (T(1) + std::exp(-v)); }
  static T silu_grad(T v) {
    const T s = T(1) / (T(1) + std::exp(-v));
    return s * (T(1) + v * (T(1) - s));
  }

 private:
  struct Layer {
    int in = 0;
    int out = 0;
    Eigen::Index w_off = 0;
    Eigen::Index b_off = 0;
  };

  void layout() {
    if (shape_.input <= 0 || shape_.output <= 0) throw ParameterError("MLP input/output widths must be positive");
    std::vector<int> widths;
    widths.push_back(shape_.input);
    for (int w : shape_.hidden) {
      if (w <= 0) throw ParameterError("MLP hidden widths must be positive");
      widths.push_back(w);
    }
    widths.push_back(shape_.output);
    layers_.clear();
    Eigen::Index off = 0;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      Layer l{widths[i], widths[i + 1], off, 0};
      off += static_cast<Eigen::Index>(l.in) * l.out;
      l.b_off = off;
      off += l.out;
      layers_.push_back(l);
    }
    num_params_ = off;
  }

  void check_input(const Mat& x) const {
    if (x.rows() != shape_.input)
      throw ContractError("MLP expected input of " + std::to_string(shape_.input) + " rows, got " +
                          std::to_string(x.rows()));
  }

  MlpShape shape_;
  std::vector<Layer> layers_;
  Eigen::Index num_params_ = 0;
  Vec params_;
};

/// Adam over one flat parameter vector.
template <typename T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Vector<T>& params, const Vector<T>& grad) {
    if (m_.size() != params.size()) {
      m_.setZero(params.size());
      v_.setZero(params.size());
    }
    if (grad.size() != params.size()) throw ContractError("Adam: gradient size mismatch");
    ++t_;
    m_ = T(beta1_) * m_ + T(1 - beta1_) * grad;
    v_ = T(beta2_) * v_ + T(1 - beta2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const T step = T(lr_ / c1);
    const T sc2 = T(1.0 / std::sqrt(c2));
    params.array() -= step * m_.array() / (v_.array().sqrt() * sc2 + T(eps_));
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return t_; }

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  Vector<T> m_;
  Vector<T> v_;
};

/// Content hash of a parameter vector (bytes of the stored scalars).
template <typename T>
std::uint64_t hash_params(const Vector<T>& p) {
  Fnv1a h;
  h.update(p.data(), static_cast<std::size_t>(p.size()) * sizeof(T));
  return h.digest();
}

}  // namespace duskill::nn
