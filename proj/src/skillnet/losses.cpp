#include <cmath>

#include "duskill/error.hpp"
#include "duskill/skillnet/model.hpp"

namespace duskill::skillnet {

namespace {

template <typename T>
void check_finite(double v, const char* component) {
  if (!std::isfinite(v)) throw TrainingError(std::string("non-finite ") + component + " loss");
}

template <typename T>
Grads<T>& ensure(Grads<T>& g, const std::string& name, const nn::Mlp<T>& net) {
  auto& v = g[name];
  if (v.size() != net.num_params()) v.setZero(net.num_params());
  return g;
}

}  // namespace

template <typename T>
NoiseDraw<T> SkillModel<T>::draw_noise(Eigen::Index batch_size, Rng& rng) const {
  const auto& c = config_;
  NoiseDraw<T> d;
  if (c.variant == Variant::BC) return d;
  d.xi_rho = rng.normal_matrix<T>(c.latent_dim, batch_size);
  if (c.hierarchical()) d.xi_sigma = rng.normal_matrix<T>(c.latent_dim, batch_size);
  if (c.diffusion()) {
    const Eigen::Index n = batch_size * c.h;
    d.ks.resize(static_cast<std::size_t>(n));
    for (auto& k : d.ks) k = static_cast<int>(rng.integer(1, c.schedule.K));
    d.eta = rng.normal_matrix<T>(c.action_dim, n);
  }
  return d;
}

template <typename T>
LossReport SkillModel<T>::losses(const Batch<T>& batch, const NoiseDraw<T>& draw, Grads<T>* grads) const {
  using Cache = typename Net::Cache;
  const auto& c = config_;
  const Eigen::Index B = batch.size();
  const int L = c.latent_dim;
  const int S = c.state_dim;
  const int A = c.action_dim;
  if (B == 0) throw ParameterError("loss needs a non-empty batch");
  if (batch.states.cols() != B * c.h || batch.actions.cols() != B * c.h)
    throw ContractError("batch step matrices must have B*h columns");
  const T inv_b = T(1) / T(B);
  const T inv_bh = T(1) / T(B * c.h);

  LossReport r;
  if (grads != nullptr) {
    grads->clear();
    for (const auto& [name, n] : nets_) ensure(*grads, name, n);
  }

  if (c.variant == Variant::BC) {
    Cache cache;
    const Mat a_hat = net("bc").forward(batch.states, cache);
    const Mat diff = a_hat - batch.actions;
    r.rec = static_cast<double>(diff.squaredNorm()) / static_cast<double>(B * c.h);
    check_finite<T>(r.rec, "reconstruction");
    r.total = r.rec;
    if (grads != nullptr) net("bc").backward(cache, T(2) * inv_bh * diff, &(*grads)["bc"], false);
    return r;
  }

  // Domain-invariant encoder.
  Cache c_qr;
  const Mat out_r = net("q_rho").forward(batch.window, c_qr);
  const GaussianDist<T> q_r = nn::gaussian_head<T>(out_r);
  const Mat z_r = q_r.sample(draw.xi_rho);
  const auto unit = nn::standard_normal_like<T>(L, B);

  // Domain-variant encoder.
  Cache c_qs;
  Mat out_s;
  GaussianDist<T> q_s;
  Mat z_s;
  if (c.hierarchical()) {
    Mat in(L + c.omega_dim, B);
    in << z_r, batch.omega;
    out_s = net("q_sigma").forward(in, c_qs);
    q_s = nn::gaussian_head<T>(out_s);
    z_s = q_s.sample(draw.xi_sigma);
  }

  // Reconstruction.
  Mat d_zr_steps;  // d rec / d per-step z_rho (L x B*h)
  Mat d_zs_steps;
  const Mat Zr = repeat_columns<T>(z_r, c.h);
  if (c.diffusion()) {
    const Mat x = diffcore::forward_noise<T>(batch.actions, draw.ks, draw.eta, schedule_);
    if (c.variant == Variant::DuSkill) {
      const Mat Zs = repeat_columns<T>(z_s, c.h);
      Cache c_er, c_es;
      const Mat u = decoder_noise("eps_rho", x, draw.ks, batch.states, Zr, &c_er);
      const Mat v = decoder_noise("eps_sigma", x, draw.ks, batch.states, Zs, &c_es);
      const T dl = T(c.delta);
      const Mat diff = (T(1) - dl) * u + dl * v - draw.eta;
      r.rec = static_cast<double>(diff.squaredNorm()) / static_cast<double>(B * c.h);
      if (grads != nullptr) {
        const Mat d_hat = T(2) * inv_bh * diff;
        d_zr_steps = decoder_noise_backward("eps_rho", c_er, draw.ks, (T(1) - dl) * d_hat, &(*grads)["eps_rho"]);
        d_zs_steps = decoder_noise_backward("eps_sigma", c_es, draw.ks, dl * d_hat, &(*grads)["eps_sigma"]);
      }
    } else {
      Mat Z = Zr;
      if (c.variant == Variant::HDU) {
        Z.resize(2 * L, B * c.h);
        Z << Zr, repeat_columns<T>(z_s, c.h);
      }
      Cache c_e;
      const Mat out = decoder_noise("eps", x, draw.ks, batch.states, Z, &c_e);
      const Mat diff = out - draw.eta;
      r.rec = static_cast<double>(diff.squaredNorm()) / static_cast<double>(B * c.h);
      if (grads != nullptr) {
        const Mat dz = decoder_noise_backward("eps", c_e, draw.ks, T(2) * inv_bh * diff, &(*grads)["eps"]);
        d_zr_steps = dz.topRows(L);
        if (c.variant == Variant::HDU) d_zs_steps = dz.bottomRows(L);
      }
    }
  } else {  // SPiRLc: closed-loop feed-forward decoder
    Mat in(S + L, B * c.h);
    in << batch.states, Zr;
    Cache c_d;
    const Mat a_hat = net("decoder").forward(in, c_d);
    const Mat diff = a_hat - batch.actions;
    r.rec = static_cast<double>(diff.squaredNorm()) / static_cast<double>(B * c.h);
    if (grads != nullptr) {
      const Mat din = net("decoder").backward(c_d, T(2) * inv_bh * diff, &(*grads)["decoder"]);
      d_zr_steps = din.bottomRows(L);
    }
  }
  check_finite<T>(r.rec, "reconstruction");

  // KL regularizers against the unit Gaussian.
  r.beta_rho = c.beta_rho;
  r.kl_rho = static_cast<double>(nn::gaussian_kl<T>(unit, q_r).sum()) / static_cast<double>(B);
  check_finite<T>(r.kl_rho, "kl_rho");
  if (c.hierarchical()) {
    r.beta_sigma = c.beta_sigma;
    r.kl_sigma = static_cast<double>(nn::gaussian_kl<T>(unit, q_s).sum()) / static_cast<double>(B);
    check_finite<T>(r.kl_sigma, "kl_sigma");
  }

  // Priors chase the (constant) encoder outputs.
  Cache c_pr, c_ps;
  const Mat out_pr = net("p_rho").forward(batch.first_state, c_pr);
  const GaussianDist<T> p_r = nn::gaussian_head<T>(out_pr);
  r.prior_rho = static_cast<double>(nn::gaussian_kl<T>(p_r, q_r).sum()) / static_cast<double>(B);
  check_finite<T>(r.prior_rho, "prior_rho");
  Mat out_ps;
  GaussianDist<T> p_s;
  if (c.hierarchical()) {
    out_ps = net("p_sigma").forward(z_r, c_ps);
    p_s = nn::gaussian_head<T>(out_ps);
    r.prior_sigma = static_cast<double>(nn::gaussian_kl<T>(p_s, q_s).sum()) / static_cast<double>(B);
    check_finite<T>(r.prior_sigma, "prior_sigma");
  }

  r.total = r.rec + r.beta_rho * r.kl_rho + r.beta_sigma * r.kl_sigma;
  check_finite<T>(r.total, "total");
  if (grads == nullptr) return r;

  Mat d_zr = sum_column_groups<T>(d_zr_steps, c.h);
  if (c.hierarchical()) {
    Mat d_zs = sum_column_groups<T>(d_zs_steps, c.h);
    const auto kg = nn::gaussian_kl_grad<T>(unit, q_s, T(c.beta_sigma) * inv_b);
    const Mat d_mean = d_zs + kg.d_mean_q;
    const Mat d_std = d_zs.cwiseProduct(draw.xi_sigma) + kg.d_std_q;
    const Mat din = net("q_sigma").backward(c_qs, nn::gaussian_head_backward<T>(out_s, d_mean, d_std),
                                             &(*grads)["q_sigma"]);
    d_zr += din.topRows(L);
  }
  {
    const auto kg = nn::gaussian_kl_grad<T>(unit, q_r, T(c.beta_rho) * inv_b);
    const Mat d_mean = d_zr + kg.d_mean_q;
    const Mat d_std = d_zr.cwiseProduct(draw.xi_rho) + kg.d_std_q;
    net("q_rho").backward(c_qr, nn::gaussian_head_backward<T>(out_r, d_mean, d_std), &(*grads)["q_rho"], false);
  }
  {
    const auto kg = nn::gaussian_kl_grad<T>(p_r, q_r, inv_b);
    net("p_rho").backward(c_pr, nn::gaussian_head_backward<T>(out_pr, kg.d_mean_p, kg.d_std_p), &(*grads)["p_rho"],
                          false);
  }
  if (c.hierarchical()) {
    const auto kg = nn::gaussian_kl_grad<T>(p_s, q_s, inv_b);
    net("p_sigma").backward(c_ps, nn::gaussian_head_backward<T>(out_ps, kg.d_mean_p, kg.d_std_p),
                            &(*grads)["p_sigma"], false);
  }
  return r;
}

template LossReport SkillModel<float>::losses(const Batch<float>&, const NoiseDraw<float>&, Grads<float>*) const;
template LossReport SkillModel<double>::losses(const Batch<double>&, const NoiseDraw<double>&, Grads<double>*) const;
template NoiseDraw<float> SkillModel<float>::draw_noise(Eigen::Index, Rng&) const;
template NoiseDraw<double> SkillModel<double>::draw_noise(Eigen::Index, Rng&) const;

}  // namespace duskill::skillnet
