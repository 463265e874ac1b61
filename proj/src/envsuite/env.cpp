#include "duskill/envsuite/env.hpp"

#include <algorithm>
#include <cmath>

#include "duskill/error.hpp"
#include "duskill/rng.hpp"

namespace duskill::envsuite {

Eigen::Vector2d goal_center(int goal_id) {
  if (goal_id < 0 || goal_id >= kNumStages) throw ParameterError("goal id out of range");
  const double angle = goal_id * M_PI / 2.0;
  return {arena::kGoalRing * std::cos(angle), arena::kGoalRing * std::sin(angle)};
}

// Budgets are calibrated against the scripted expert: 15% above the worst
// stage it needs over every ordering, so a matched expert always fits and a
// markedly slower (speed) or more aggressive (energy) controller does not.
int speed_step_budget(double p) {
  const double vmax = 0.015 + 0.03 * p;
  return static_cast<int>(std::ceil(1.15 * (1.8 / vmax + 4.0)));
}

double energy_budget(double p) {
  const double cruise = 0.035 - 0.017 * p;
  return 1.15 * (59.0 * cruise - 0.28);
}

double wind_force(double p) { return arena::kWindMax * p; }

int EnvState::active_stage() const {
  for (int i = 0; i < kNumStages; ++i)
    if (!stage_done[static_cast<std::size_t>(i)]) return i;
  return kNumStages;
}

int EnvState::stages_completed() const {
  return static_cast<int>(std::count(stage_done.begin(), stage_done.end(), true));
}

EnvState env_reset(const DomainParam& domain, const StageOrder& order, std::uint64_t seed) {
  domain.validate();
  order.validate();
  Rng rng(derive_seed({seed, 0x5eedULL}));
  EnvState s;
  s.position = {rng.uniform(-arena::kStartJitter, arena::kStartJitter),
                rng.uniform(-arena::kStartJitter, arena::kStartJitter)};
  for (int i = 0; i < kNumStages; ++i)
    s.goal_positions[static_cast<std::size_t>(i)] = goal_center(order.goals[static_cast<std::size_t>(i)]);
  return s;
}

StepResult env_step(const EnvState& state, const Eigen::Vector2d& action, const DomainParam& domain) {
  if (state.done) throw StateError("env_step called on a finished episode");
  const int stage = state.active_stage();
  const double p = domain.stage_params[static_cast<std::size_t>(stage)];

  const Eigen::Vector2d a = action.cwiseMax(-1.0).cwiseMin(1.0);
  Eigen::Vector2d force = a;
  if (domain.family == Family::Wind) force.x() += wind_force(p);

  StepResult r;
  EnvState& s = r.state;
  s = state;
  s.velocity = arena::kDamping * s.velocity + arena::kAccelGain * force;
  s.position += s.velocity;
  for (int d = 0; d < 2; ++d) {
    if (std::abs(s.position[d]) > arena::kHalfWidth) {
      s.position[d] = std::clamp(s.position[d], -arena::kHalfWidth, arena::kHalfWidth);
      s.velocity[d] = 0.0;
    }
  }
  s.step_count += 1;
  s.stage_steps += 1;
  s.stage_energy += a.squaredNorm();

  if (!s.stage_failed) {
    if (domain.family == Family::Speed && s.stage_steps > speed_step_budget(p)) s.stage_failed = true;
    if (domain.family == Family::Energy && s.stage_energy > energy_budget(p)) s.stage_failed = true;
  }
  if (!s.stage_failed &&
      (s.position - s.goal_positions[static_cast<std::size_t>(stage)]).norm() < arena::kGoalRadius) {
    s.stage_done[static_cast<std::size_t>(stage)] = true;
    s.stage_steps = 0;
    s.stage_energy = 0.0;
    r.reward = 1.0;
  }
  s.done = s.active_stage() == kNumStages || s.step_count >= arena::kMaxSteps;
  r.done = s.done;
  return r;
}

Eigen::VectorXf observe(const EnvState& state) {
  Eigen::VectorXf o(kStateDim);
  o << static_cast<float>(state.position.x()), static_cast<float>(state.position.y()),
      static_cast<float>(state.velocity.x()), static_cast<float>(state.velocity.y()),
      state.stage_done[0] ? 1.f : 0.f, state.stage_done[1] ? 1.f : 0.f, state.stage_done[2] ? 1.f : 0.f,
      state.stage_done[3] ? 1.f : 0.f;
  return o;
}

}  // namespace duskill::envsuite
