#pragma once

#include <array>
#include <string>
#include <vector>

namespace duskill::envsuite {

inline constexpr int kNumStages = 4;

/// Which aspect of the task a domain perturbs.
enum class Family { Speed, Energy, Wind };

std::string to_string(Family f);
Family parse_family(const std::string& s);

/// Domain parameterization: one normalized scalar per sub-task.
struct DomainParam {
  Family family = Family::Speed;
  std::array<double, kNumStages> stage_params{0.5, 0.5, 0.5, 0.5};

  bool operator==(const DomainParam&) const = default;

  /// Throws ParameterError unless every entry is finite and in [0, 1].
  void validate() const;
  std::string describe() const;
};

/// Builds a DomainParam from a runtime-sized vector (validates the stage count).
DomainParam make_domain(Family family, const std::vector<double>& params);

/// Order in which the four goal regions must be visited.
struct StageOrder {
  std::array<int, kNumStages> goals{0, 1, 2, 3};

  bool operator==(const StageOrder&) const = default;

  /// Throws ParameterError unless `goals` is a permutation of 0..3.
  void validate() const;
  std::string describe() const;
};

StageOrder make_order(const std::vector<int>& goals);

/// Sub-task names for goal ids 0..3, used only for display.
inline constexpr std::array<const char*, kNumStages> kGoalNames{"puck", "door", "button", "drawer"};

/// The six source orderings and three target orderings of the benchmark.
const std::vector<StageOrder>& source_orders();
const std::vector<StageOrder>& target_orders();

}  // namespace duskill::envsuite
