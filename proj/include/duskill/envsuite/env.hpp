#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Core>

#include "duskill/envsuite/domain.hpp"

namespace duskill::envsuite {

/// Fixed physical constants of the arena.
namespace arena {
inline constexpr double kHalfWidth = 1.0;     // positions live in [-1, 1]^2
inline constexpr double kGoalRing = 0.6;      // goal centers on a ring of this radius
inline constexpr double kGoalRadius = 0.1;    // entering this disk completes a stage
inline constexpr double kStartJitter = 0.05;  // max-norm bound of the start offset
inline constexpr int kMaxSteps = 400;         // episode cap T
inline constexpr double kDamping = 0.85;      // velocity retained per step
inline constexpr double kAccelGain = 0.02;    // velocity change per unit action
inline constexpr double kWindMax = 0.8;       // wind force at stage parameter 1, action units
}  // namespace arena

inline constexpr int kStateDim = 8;   // position(2), velocity(2), stage_done(4)
inline constexpr int kActionDim = 2;

/// Center of goal region `goal_id` (fixed ring layout).
Eigen::Vector2d goal_center(int goal_id);

/// Per-stage limits derived from a stage parameter.
int speed_step_budget(double p);      // steps allowed for one stage
double energy_budget(double p);       // sum of |a|^2 allowed for one stage
double wind_force(double p);          // +x force added to the action

/// Full simulator state. `stage_steps`, `stage_energy` and `stage_failed`
/// are the per-stage bookkeeping needed by the speed and energy families.
struct EnvState {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
  std::array<bool, kNumStages> stage_done{};
  std::array<Eigen::Vector2d, kNumStages> goal_positions{};
  int step_count = 0;
  int stage_steps = 0;
  double stage_energy = 0.0;
  bool stage_failed = false;
  bool done = false;

  bool operator==(const EnvState&) const = default;

  /// Index of the first unfinished stage, or kNumStages when all are done.
  int active_stage() const;
  int stages_completed() const;
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool done = false;
};

/// Start of an episode. Deterministic in (domain, order, seed).
EnvState env_reset(const DomainParam& domain, const StageOrder& order, std::uint64_t seed);

/// One transition. Actions are clamped to [-1, 1] per component.
StepResult env_step(const EnvState& state, const Eigen::Vector2d& action, const DomainParam& domain);

/// Flattened observation: position, velocity, stage_done flags.
Eigen::VectorXf observe(const EnvState& state);

}  // namespace duskill::envsuite
