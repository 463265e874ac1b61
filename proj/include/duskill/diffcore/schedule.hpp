#pragma once

#include <vector>

#include "json.hpp"

namespace duskill::diffcore {

/// What a checkpoint stores; the arrays are always rebuilt from it.
struct ScheduleSpec {
  int K = 50;
  double beta_min = 1e-4;
  double beta_max = 0.02;

  bool operator==(const ScheduleSpec&) const = default;
};

nlohmann::json to_json(const ScheduleSpec& s);
ScheduleSpec schedule_from_json(const nlohmann::json& j);

/// Linear variance schedule. Step k in 1..K is stored at index k-1.
class DiffusionSchedule {
 public:
  DiffusionSchedule() = default;

  int K() const { return spec_.K; }
  const ScheduleSpec& spec() const { return spec_; }

  double beta(int k) const { return beta_.at(index(k)); }
  double alpha(int k) const { return alpha_.at(index(k)); }
  double alpha_bar(int k) const { return alpha_bar_.at(index(k)); }
  /// Reverse-process noise scale; identically zero (deterministic sampling).
  double zeta(int k) const { return zeta_.at(index(k)); }

  /// Throws ParameterError unless 1 <= k <= K.
  void check_step(int k) const;

  friend DiffusionSchedule build_schedule(int K, double beta_min, double beta_max);

 private:
  std::size_t index(int k) const {
    check_step(k);
    return static_cast<std::size_t>(k - 1);
  }

  ScheduleSpec spec_;
  std::vector<double> beta_, alpha_, alpha_bar_, zeta_;
};

DiffusionSchedule build_schedule(int K, double beta_min, double beta_max);
inline DiffusionSchedule build_schedule(const ScheduleSpec& s) { return build_schedule(s.K, s.beta_min, s.beta_max); }

}  // namespace duskill::diffcore
