#include "duskill/skillnet/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "duskill/error.hpp"

namespace duskill::skillnet {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::DuSkill:
      return "duskill";
    case Variant::HDU:
      return "hdu";
    case Variant::DU:
      return "du";
    case Variant::SPiRLc:
      return "spirlc";
    case Variant::BC:
      return "bc";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  std::string s;
  for (char c : name)
    if (c != '-' && c != '_') s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "duskill") return Variant::DuSkill;
  if (s == "hdu") return Variant::HDU;
  if (s == "du") return Variant::DU;
  if (s == "spirlc") return Variant::SPiRLc;
  if (s == "bc") return Variant::BC;
  throw ParameterError("unknown variant '" + name + "'");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"state_dim", c.state_dim},
          {"action_dim", c.action_dim},
          {"omega_dim", c.omega_dim},
          {"h", c.h},
          {"latent_dim", c.latent_dim},
          {"time_embed_dim", c.time_embed_dim},
          {"hidden_width", c.hidden_width},
          {"hidden_layers", c.hidden_layers},
          {"beta_rho", c.beta_rho},
          {"beta_sigma", c.beta_sigma},
          {"delta", c.delta},
          {"decoder_head", c.decoder_head == DecoderHead::Noise ? "noise" : "sample"},
          {"schedule", diffcore::to_json(c.schedule)},
          {"encoder_init_std", c.encoder_init_std},
          {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> keys{"variant",     "state_dim",   "action_dim",    "omega_dim",
                                             "h",           "latent_dim",  "time_embed_dim", "hidden_width",
                                             "hidden_layers", "beta_rho",  "beta_sigma",    "delta", "decoder_head",
                                             "schedule",    "encoder_init_std", "init_seed"};
  if (!j.is_object()) throw ParameterError("model config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ParameterError("unknown model config key '" + k + "'");
  ModelConfig c;
  try {
    if (j.contains("variant")) c.variant = parse_variant(j["variant"].get<std::string>());
    if (j.contains("state_dim")) c.state_dim = j["state_dim"].get<int>();
    if (j.contains("action_dim")) c.action_dim = j["action_dim"].get<int>();
    if (j.contains("omega_dim")) c.omega_dim = j["omega_dim"].get<int>();
    if (j.contains("h")) c.h = j["h"].get<int>();
    if (j.contains("latent_dim")) c.latent_dim = j["latent_dim"].get<int>();
    if (j.contains("time_embed_dim")) c.time_embed_dim = j["time_embed_dim"].get<int>();
    if (j.contains("hidden_width")) c.hidden_width = j["hidden_width"].get<int>();
    if (j.contains("hidden_layers")) c.hidden_layers = j["hidden_layers"].get<int>();
    if (j.contains("beta_rho")) c.beta_rho = j["beta_rho"].get<double>();
    if (j.contains("beta_sigma")) c.beta_sigma = j["beta_sigma"].get<double>();
    if (j.contains("delta")) c.delta = j["delta"].get<double>();
    if (j.contains("decoder_head")) {
      const auto head = j["decoder_head"].get<std::string>();
      if (head != "noise" && head != "sample") throw ParameterError("decoder_head must be 'noise' or 'sample'");
      c.decoder_head = head == "noise" ? DecoderHead::Noise : DecoderHead::Sample;
    }
    if (j.contains("schedule")) c.schedule = diffcore::schedule_from_json(j["schedule"]);
    if (j.contains("encoder_init_std")) c.encoder_init_std = j["encoder_init_std"].get<double>();
    if (j.contains("init_seed")) c.init_seed = j["init_seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("bad model config value: ") + e.what());
  }
  return c;
}

nlohmann::json to_json(const LossReport& r) {
  return {{"rec", r.rec},           {"kl_rho", r.kl_rho},     {"kl_sigma", r.kl_sigma},
          {"prior_rho", r.prior_rho}, {"prior_sigma", r.prior_sigma}, {"total", r.total},
          {"beta_rho", r.beta_rho}, {"beta_sigma", r.beta_sigma}};
}

template <typename T>
Matrix<T> time_embedding(const std::vector<int>& ks, int dim) {
  Matrix<T> e(dim, static_cast<Eigen::Index>(ks.size()));
  const int half = dim / 2;
  for (std::size_t j = 0; j < ks.size(); ++j) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(1000.0) * i / std::max(half, 1));
      e(i, static_cast<Eigen::Index>(j)) = static_cast<T>(std::sin(ks[j] * freq));
      e(half + i, static_cast<Eigen::Index>(j)) = static_cast<T>(std::cos(ks[j] * freq));
    }
    if (dim % 2) e(dim - 1, static_cast<Eigen::Index>(j)) = static_cast<T>(ks[j]) / T(100);
  }
  return e;
}

template <typename T>
Matrix<T> repeat_columns(const Matrix<T>& m, int times) {
  Matrix<T> out(m.rows(), m.cols() * times);
  for (Eigen::Index b = 0; b < m.cols(); ++b)
    for (int t = 0; t < times; ++t) out.col(b * times + t) = m.col(b);
  return out;
}

template <typename T>
Matrix<T> sum_column_groups(const Matrix<T>& m, int times) {
  Matrix<T> out = Matrix<T>::Zero(m.rows(), m.cols() / times);
  for (Eigen::Index b = 0; b < out.cols(); ++b)
    for (int t = 0; t < times; ++t) out.col(b) += m.col(b * times + t);
  return out;
}

template <typename T>
std::map<std::string, nn::MlpShape> SkillModel<T>::shapes(const ModelConfig& c) {
  const int L = c.latent_dim;
  const int dec_in = c.action_dim + c.time_embed_dim + c.state_dim;
  auto mk = [&](int in, int out) { return nn::make_shape(in, c.hidden_width, c.hidden_layers, out); };
  std::map<std::string, nn::MlpShape> s;
  switch (c.variant) {
    case Variant::DuSkill:
      s["eps_rho"] = mk(dec_in + L, c.action_dim);
      s["eps_sigma"] = mk(dec_in + L, c.action_dim);
      [[fallthrough]];
    case Variant::HDU:
      s["q_rho"] = mk(c.window_dim(), 2 * L);
      s["q_sigma"] = mk(L + c.omega_dim, 2 * L);
      s["p_rho"] = mk(c.state_dim, 2 * L);
      s["p_sigma"] = mk(L, 2 * L);
      if (c.variant == Variant::HDU) s["eps"] = mk(dec_in + 2 * L, c.action_dim);
      break;
    case Variant::DU:
      s["q_rho"] = mk(c.window_dim(), 2 * L);
      s["p_rho"] = mk(c.state_dim, 2 * L);
      s["eps"] = mk(dec_in + L, c.action_dim);
      break;
    case Variant::SPiRLc:
      s["q_rho"] = mk(c.window_dim(), 2 * L);
      s["p_rho"] = mk(c.state_dim, 2 * L);
      s["decoder"] = mk(c.state_dim + L, c.action_dim);
      break;
    case Variant::BC:
      s["bc"] = mk(c.state_dim, c.action_dim);
      break;
  }
  return s;
}

namespace {

void validate(const ModelConfig& c) {
  if (c.state_dim < 1 || c.action_dim < 1 || c.omega_dim < 1 || c.h < 1 || c.latent_dim < 1 ||
      c.time_embed_dim < 1 || c.hidden_width < 1 || c.hidden_layers < 1)
    throw ParameterError("model dimensions must be positive");
  if (c.beta_rho < 0.0 || c.beta_sigma < 0.0) throw ParameterError("KL weights must be >= 0");
  if (!(c.encoder_init_std >= 0.0) || !std::isfinite(c.encoder_init_std))
    throw ParameterError("encoder_init_std must be finite and >= 0");
  if (!(c.delta >= 0.0)) throw ParameterError("guidance weight must be >= 0");
}

}  // namespace

template <typename T>
SkillModel<T>::SkillModel(const ModelConfig& config)
    : config_(config), schedule_(diffcore::build_schedule(config.schedule)) {
  validate(config_);
  for (const auto& [name, shape] : shapes(config_)) {
    Fnv1a tag;
    tag.update(name.data(), name.size());
    Rng rng(derive_seed({config_.init_seed, tag.digest()}));
    nets_.emplace(name, Net(shape, rng));
  }
  // A small initial posterior std keeps early reparameterization noise from
  // swamping the reconstruction signal; the KL terms are weak either way.
  if (config_.encoder_init_std > 0.0) {
    for (const char* n : {"q_rho", "q_sigma"}) {
      if (!has(n)) continue;
      auto& net = nets_.at(n);
      auto b = net.bias(net.num_layers() - 1);
      b.tail(config_.latent_dim).setConstant(static_cast<T>(nn::inverse_head_std(config_.encoder_init_std)));
    }
  }
}

template <typename T>
SkillModel<T>::SkillModel(const ModelConfig& config, std::map<std::string, Net> nets)
    : config_(config), schedule_(diffcore::build_schedule(config.schedule)), nets_(std::move(nets)) {
  validate(config_);
  const auto expected = shapes(config_);
  if (expected.size() != nets_.size()) throw ContractError("network set does not match variant " + to_string(config_.variant));
  for (const auto& [name, shape] : expected) {
    auto it = nets_.find(name);
    if (it == nets_.end()) throw ContractError("missing network '" + name + "'");
    if (!(it->second.shape() == shape)) throw ContractError("network '" + name + "' has the wrong shape");
  }
}

template <typename T>
const typename SkillModel<T>::Net& SkillModel<T>::net(const std::string& name) const {
  auto it = nets_.find(name);
  if (it == nets_.end())
    throw UnsupportedVariantError("variant " + to_string(config_.variant) + " has no network '" + name + "'");
  return it->second;
}

template <typename T>
typename SkillModel<T>::Net& SkillModel<T>::net(const std::string& name) {
  auto it = nets_.find(name);
  if (it == nets_.end())
    throw UnsupportedVariantError("variant " + to_string(config_.variant) + " has no network '" + name + "'");
  return it->second;
}

template <typename T>
std::vector<std::string> SkillModel<T>::names() const {
  std::vector<std::string> out;
  for (const auto& kv : nets_) out.push_back(kv.first);
  return out;
}

template <typename T>
GaussianDist<T> SkillModel<T>::encode_invariant(const Mat& window) const {
  if (window.rows() != config_.window_dim())
    throw ContractError("skill window must have " + std::to_string(config_.window_dim()) + " rows (h=" +
                        std::to_string(config_.h) + "), got " + std::to_string(window.rows()));
  return nn::gaussian_head<T>(net("q_rho").forward(window));
}

template <typename T>
GaussianDist<T> SkillModel<T>::encode_variant(const Mat& z_rho, const Mat& omega) const {
  if (z_rho.rows() != config_.latent_dim || omega.rows() != config_.omega_dim || z_rho.cols() != omega.cols())
    throw ContractError("encode_variant: input dimension mismatch");
  Mat in(z_rho.rows() + omega.rows(), z_rho.cols());
  in << z_rho, omega;
  return nn::gaussian_head<T>(net("q_sigma").forward(in));
}

template <typename T>
GaussianDist<T> SkillModel<T>::prior_invariant(const Mat& s) const {
  if (s.rows() != config_.state_dim) throw ContractError("prior_invariant: state dimension mismatch");
  return nn::gaussian_head<T>(net("p_rho").forward(s));
}

template <typename T>
GaussianDist<T> SkillModel<T>::prior_variant(const Mat& z_rho) const {
  if (z_rho.rows() != config_.latent_dim) throw ContractError("prior_variant: latent dimension mismatch");
  return nn::gaussian_head<T>(net("p_sigma").forward(z_rho));
}

template <typename T>
typename SkillModel<T>::Mat SkillModel<T>::decoder_input(const Mat& x, const std::vector<int>& ks, const Mat& s,
                                                          const Mat& z) const {
  if (x.rows() != config_.action_dim || s.rows() != config_.state_dim || x.cols() != s.cols() ||
      z.cols() != s.cols())
    throw ContractError("decoder input dimension mismatch");
  Mat in(x.rows() + config_.time_embed_dim + s.rows() + z.rows(), x.cols());
  in << x, time_embedding<T>(ks, config_.time_embed_dim), s, z;
  return in;
}

template <typename T>
typename SkillModel<T>::Mat SkillModel<T>::decoder_noise(const std::string& name, const Mat& x,
                                                          const std::vector<int>& ks, const Mat& s, const Mat& z,
                                                          typename Net::Cache* cache) const {
  const Mat in = decoder_input(x, ks, s, z);
  Mat out = cache ? net(name).forward(in, *cache) : net(name).forward(in);
  if (config_.decoder_head == DecoderHead::Noise) return out;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double ab = schedule_.alpha_bar(ks[static_cast<std::size_t>(j)]);
    out.col(j) = (x.col(j) - T(std::sqrt(ab)) * out.col(j)) * T(1.0 / std::sqrt(1.0 - ab));
  }
  return out;
}

template <typename T>
typename SkillModel<T>::Mat SkillModel<T>::decoder_noise_backward(const std::string& name,
                                                                   const typename Net::Cache& cache,
                                                                   const std::vector<int>& ks, const Mat& d_eta,
                                                                   Vec* grad) const {
  Mat d_out = d_eta;
  if (config_.decoder_head == DecoderHead::Sample) {
    for (Eigen::Index j = 0; j < d_out.cols(); ++j) {
      const double ab = schedule_.alpha_bar(ks[static_cast<std::size_t>(j)]);
      d_out.col(j) *= T(-std::sqrt(ab / (1.0 - ab)));
    }
  }
  const Mat din = net(name).backward(cache, d_out, grad);
  return din.bottomRows(din.rows() - config_.action_dim - config_.time_embed_dim - config_.state_dim);
}

template <typename T>
typename SkillModel<T>::Mat SkillModel<T>::noise_rho(const Mat& x, int k, const Mat& s, const Mat& z_rho) const {
  return decoder_noise("eps_rho", x, std::vector<int>(static_cast<std::size_t>(x.cols()), k), s, z_rho);
}

template <typename T>
typename SkillModel<T>::Mat SkillModel<T>::noise_sigma(const Mat& x, int k, const Mat& s, const Mat& z_sigma) const {
  return decoder_noise("eps_sigma", x, std::vector<int>(static_cast<std::size_t>(x.cols()), k), s, z_sigma);
}

template <typename T>
typename SkillModel<T>::Mat SkillModel<T>::noise_joint(const Mat& x, int k, const Mat& s, const Mat& z) const {
  return decoder_noise("eps", x, std::vector<int>(static_cast<std::size_t>(x.cols()), k), s, z);
}

template <typename T>
typename SkillModel<T>::Mat SkillModel<T>::predict_noise(const Mat& x, int k, const Mat& s, const Mat& z_rho,
                                                          const Mat& z_sigma) const {
  switch (config_.variant) {
    case Variant::DuSkill: {
      diffcore::NoiseFn<T> fr = [this](const Mat& a, int kk, const Mat& b, const Mat& c) { return noise_rho(a, kk, b, c); };
      diffcore::NoiseFn<T> fs = [this](const Mat& a, int kk, const Mat& b, const Mat& c) { return noise_sigma(a, kk, b, c); };
      return diffcore::guided_predict<T>(x, k, s, z_rho, z_sigma, config_.delta, fr, fs);
    }
    case Variant::HDU: {
      Mat z(z_rho.rows() + z_sigma.rows(), z_rho.cols());
      z << z_rho, z_sigma;
      return noise_joint(x, k, s, z);
    }
    case Variant::DU:
      return noise_joint(x, k, s, z_rho);
    default:
      throw UnsupportedVariantError("variant " + to_string(config_.variant) + " has no diffusion decoder");
  }
}

template <typename T>
typename SkillModel<T>::Mat SkillModel<T>::act(const Mat& s, const Mat& z_rho, const Mat& z_sigma,
                                                const std::vector<std::uint64_t>& seeds) const {
  if (config_.diffusion()) {
    if (config_.variant == Variant::DuSkill) {
      diffcore::SplitDecoders<T> dec{
          [this](const Mat& a, int kk, const Mat& b, const Mat& c) { return noise_rho(a, kk, b, c); },
          [this](const Mat& a, int kk, const Mat& b, const Mat& c) { return noise_sigma(a, kk, b, c); }};
      return diffcore::sample_action<T>(s, z_rho, z_sigma, schedule_, config_.delta, dec, config_.action_dim, seeds);
    }
    if (s.cols() != static_cast<Eigen::Index>(seeds.size())) throw ContractError("act: one seed per state column");
    diffcore::StepPredictor<T> predict = [&](const Mat& x, int k) { return predict_noise(x, k, s, z_rho, z_sigma); };
    return diffcore::denoise<T>(diffcore::initial_noise<T>(config_.action_dim, seeds), predict, schedule_);
  }
  Mat a;
  if (config_.variant == Variant::SPiRLc) {
    if (z_rho.cols() != s.cols()) throw ContractError("act: latent and state batch differ");
    Mat in(s.rows() + z_rho.rows(), s.cols());
    in << s, z_rho;
    a = net("decoder").forward(in);
  } else {
    a = net("bc").forward(s);
  }
  if (!a.allFinite()) throw SamplingError("non-finite action from " + to_string(config_.variant) + " decoder");
  return a.cwiseMax(T(-1)).cwiseMin(T(1));
}

template class SkillModel<float>;
template class SkillModel<double>;
template Matrix<float> time_embedding<float>(const std::vector<int>&, int);
template Matrix<double> time_embedding<double>(const std::vector<int>&, int);
template Matrix<float> repeat_columns<float>(const Matrix<float>&, int);
template Matrix<double> repeat_columns<double>(const Matrix<double>&, int);
template Matrix<float> sum_column_groups<float>(const Matrix<float>&, int);
template Matrix<double> sum_column_groups<double>(const Matrix<double>&, int);

}  // namespace duskill::skillnet
