#pragma once

#include <Eigen/Core>

#include "duskill/envsuite/domain.hpp"
#include "duskill/envsuite/env.hpp"

namespace duskill::envsuite {

/// Gains of the scripted controller.
namespace expert_gains {
inline constexpr double kVelocity = 10.0;  // action per unit velocity error
inline constexpr double kApproach = 0.25;  // desired speed per unit distance near the goal
inline constexpr double kCruise = 0.03;    // cruise speed outside the speed/energy families
}  // namespace expert_gains

/// Cruise speed the expert targets for a stage parameter of the given family.
double expert_cruise_speed(Family family, double p);

/// Velocity-tracking PD controller toward the active goal with
/// family-specific modulation:
///   speed  - cruise speed grows with the stage parameter;
///   energy - cruise speed and acceleration magnitude shrink with it;
///   wind   - feed-forward term cancelling the wind force.
Eigen::Vector2d expert_action(const EnvState& state, const DomainParam& domain, const StageOrder& order);

}  // namespace duskill::envsuite
