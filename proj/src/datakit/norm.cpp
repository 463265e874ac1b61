#include "duskill/datakit/norm.hpp"

#include <iostream>

#include "duskill/error.hpp"

namespace duskill::datakit {

NormStats fit_norm(const envsuite::TrajectorySet& trajs, std::vector<std::string>* warnings) {
  if (trajs.empty()) throw ParameterError("fit_norm needs at least one trajectory");
  const Eigen::Index sd = trajs.front().states.rows();
  const Eigen::Index ad = trajs.front().actions.rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(sd);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(sd);
  Eigen::VectorXd amin = Eigen::VectorXd::Constant(ad, std::numeric_limits<double>::infinity());
  Eigen::VectorXd amax = Eigen::VectorXd::Constant(ad, -std::numeric_limits<double>::infinity());
  double n = 0;
  for (const auto& t : trajs) {
    const Eigen::MatrixXd s = t.states.cast<double>();
    sum += s.rowwise().sum();
    n += static_cast<double>(s.cols());
    const Eigen::MatrixXd a = t.actions.cast<double>();
    if (a.cols() > 0) {
      amin = amin.cwiseMin(a.rowwise().minCoeff());
      amax = amax.cwiseMax(a.rowwise().maxCoeff());
    }
  }
  if (!std::isfinite(amin.sum())) throw ParameterError("fit_norm needs at least one action");
  NormStats st;
  st.state_mean = sum / n;
  for (const auto& t : trajs) {
    const Eigen::MatrixXd c = t.states.cast<double>().colwise() - st.state_mean;
    sq += c.array().square().matrix().rowwise().sum();
  }
  st.state_std = (sq / n).cwiseSqrt().cwiseMax(kStdFloor);
  for (Eigen::Index i = 0; i < ad; ++i) {
    if (!(amax[i] > amin[i])) {
      const std::string msg = "action dimension " + std::to_string(i) +
                              " is constant in the data; widening its range by " + std::to_string(kRangeEpsilon);
      std::cerr << "warning: " << msg << '\n';
      if (warnings) warnings->push_back(msg);
      amin[i] -= kRangeEpsilon;
      amax[i] += kRangeEpsilon;
    }
  }
  st.action_min = amin;
  st.action_max = amax;
  return st;
}

Eigen::MatrixXf apply_state_norm(const Eigen::MatrixXf& states, const NormStats& stats) {
  if (states.rows() != stats.state_mean.size()) throw ContractError("state dimension does not match NormStats");
  return ((states.cast<double>().colwise() - stats.state_mean).array().colwise() / stats.state_std.array())
      .cast<float>();
}

Eigen::MatrixXf invert_state_norm(const Eigen::MatrixXf& states, const NormStats& stats) {
  if (states.rows() != stats.state_mean.size()) throw ContractError("state dimension does not match NormStats");
  return ((states.cast<double>().array().colwise() * stats.state_std.array()).matrix().colwise() + stats.state_mean)
      .cast<float>();
}

Eigen::MatrixXf apply_action_norm(const Eigen::MatrixXf& actions, const NormStats& stats) {
  if (actions.rows() != stats.action_min.size()) throw ContractError("action dimension does not match NormStats");
  const Eigen::ArrayXd range = (stats.action_max - stats.action_min).array();
  return (((actions.cast<double>().colwise() - stats.action_min).array().colwise() / range) * 2.0 - 1.0)
      .cast<float>();
}

Eigen::MatrixXf invert_action_norm(const Eigen::MatrixXf& actions, const NormStats& stats) {
  if (actions.rows() != stats.action_min.size()) throw ContractError("action dimension does not match NormStats");
  const Eigen::ArrayXd range = (stats.action_max - stats.action_min).array();
  return ((((actions.cast<double>().array() + 1.0) * 0.5).colwise() * range).matrix().colwise() + stats.action_min)
      .cast<float>();
}

namespace {
std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }
Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

nlohmann::json to_json(const NormStats& s) {
  return {{"state_mean", to_vec(s.state_mean)},
          {"state_std", to_vec(s.state_std)},
          {"action_min", to_vec(s.action_min)},
          {"action_max", to_vec(s.action_max)}};
}

NormStats norm_from_json(const nlohmann::json& j) {
  NormStats s;
  try {
    s.state_mean = from_vec(j.at("state_mean").get<std::vector<double>>());
    s.state_std = from_vec(j.at("state_std").get<std::vector<double>>());
    s.action_min = from_vec(j.at("action_min").get<std::vector<double>>());
    s.action_max = from_vec(j.at("action_max").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw FileError(std::string("malformed norm stats: ") + e.what());
  }
  if (s.state_mean.size() != s.state_std.size() || s.action_min.size() != s.action_max.size())
    throw FileError("norm stats vectors have inconsistent lengths");
  if ((s.state_std.array() <= 0).any() || (s.action_max.array() <= s.action_min.array()).any())
    throw FileError("norm stats violate std > 0 or min < max");
  return s;
}

}  // namespace duskill::datakit
