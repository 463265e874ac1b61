#include "duskill/envsuite/expert.hpp"

#include <algorithm>

#include "duskill/error.hpp"

namespace duskill::envsuite {

double expert_cruise_speed(Family family, double p) {
  switch (family) {
    case Family::Speed:
      return 0.015 + 0.03 * p;
    case Family::Energy:
      return 0.035 - 0.017 * p;
    case Family::Wind:
      return expert_gains::kCruise;
  }
  return expert_gains::kCruise;
}

Eigen::Vector2d expert_action(const EnvState& state, const DomainParam& domain, const StageOrder& order) {
  if (state.done) throw StateError("expert_action called on a finished episode");
  const int stage = state.active_stage();
  const double p = domain.stage_params[static_cast<std::size_t>(stage)];
  const Eigen::Vector2d goal = goal_center(order.goals[static_cast<std::size_t>(stage)]);

  const Eigen::Vector2d err = goal - state.position;
  const double dist = err.norm();
  Eigen::Vector2d v_des = Eigen::Vector2d::Zero();
  if (dist > 0.0) {
    const double speed = std::min(expert_cruise_speed(domain.family, p), expert_gains::kApproach * dist);
    v_des = err / dist * speed;
  }
  Eigen::Vector2d a = expert_gains::kVelocity * (v_des - state.velocity);
  if (domain.family == Family::Wind) a.x() -= wind_force(p);
  if (domain.family == Family::Energy) {
    const double cap = 1.0 - 0.5 * p;
    const double n = a.norm();
    if (n > cap) a *= cap / n;
  }
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

}  // namespace duskill::envsuite
