#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "duskill/envsuite/dataset.hpp"

namespace duskill::datakit {

inline constexpr double kStdFloor = 1e-6;
inline constexpr double kRangeEpsilon = 1e-3;

/// States are standardized; actions are mapped affinely from the source
/// data's [min, max] onto [-1, 1].
struct NormStats {
  Eigen::VectorXd state_mean;
  Eigen::VectorXd state_std;
  Eigen::VectorXd action_min;
  Eigen::VectorXd action_max;

  bool operator==(const NormStats& o) const {
    return state_mean == o.state_mean && state_std == o.state_std && action_min == o.action_min &&
           action_max == o.action_max;
  }
};

/// Statistics over every state and action of `trajs`. A constant action
/// dimension is widened by kRangeEpsilon on both sides and reported in
/// `warnings` (also printed to stderr).
NormStats fit_norm(const envsuite::TrajectorySet& trajs, std::vector<std::string>* warnings = nullptr);

Eigen::MatrixXf apply_state_norm(const Eigen::MatrixXf& states, const NormStats& stats);
Eigen::MatrixXf invert_state_norm(const Eigen::MatrixXf& states, const NormStats& stats);
Eigen::MatrixXf apply_action_norm(const Eigen::MatrixXf& actions, const NormStats& stats);
Eigen::MatrixXf invert_action_norm(const Eigen::MatrixXf& actions, const NormStats& stats);

nlohmann::json to_json(const NormStats& stats);
NormStats norm_from_json(const nlohmann::json& j);

}  // namespace duskill::datakit
