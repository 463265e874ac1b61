#include "duskill/envsuite/domain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "duskill/error.hpp"

namespace duskill::envsuite {

std::string to_string(Family f) {
  switch (f) {
    case Family::Speed:
      return "speed";
    case Family::Energy:
      return "energy";
    case Family::Wind:
      return "wind";
  }
  return "unknown";
}

Family parse_family(const std::string& s) {
  if (s == "speed") return Family::Speed;
  if (s == "energy") return Family::Energy;
  if (s == "wind") return Family::Wind;
  throw ParameterError("unknown domain family '" + s + "'");
}

void DomainParam::validate() const {
  for (int i = 0; i < kNumStages; ++i) {
    const double p = stage_params[static_cast<std::size_t>(i)];
    if (!std::isfinite(p) || p < 0.0 || p > 1.0)
      throw ParameterError("stage parameter " + std::to_string(i) + " of " + to_string(family) +
                           " domain is outside [0, 1]");
  }
}

std::string DomainParam::describe() const {
  std::string s = to_string(family) + "[";
  char buf[32];
  for (int i = 0; i < kNumStages; ++i) {
    std::snprintf(buf, sizeof(buf), "%s%.2f", i ? "," : "", stage_params[static_cast<std::size_t>(i)]);
    s += buf;
  }
  return s + "]";
}

DomainParam make_domain(Family family, const std::vector<double>& params) {
  if (params.size() != static_cast<std::size_t>(kNumStages))
    throw ParameterError("domain needs exactly " + std::to_string(kNumStages) + " stage parameters, got " +
                         std::to_string(params.size()));
  DomainParam d;
  d.family = family;
  std::copy(params.begin(), params.end(), d.stage_params.begin());
  d.validate();
  return d;
}

void StageOrder::validate() const {
  std::array<bool, kNumStages> seen{};
  for (int g : goals) {
    if (g < 0 || g >= kNumStages || seen[static_cast<std::size_t>(g)])
      throw ParameterError("stage order " + describe() + " is not a permutation of 0..3");
    seen[static_cast<std::size_t>(g)] = true;
  }
}

std::string StageOrder::describe() const {
  std::string s;
  for (int i = 0; i < kNumStages; ++i) {
    if (i) s += "-";
    const int g = goals[static_cast<std::size_t>(i)];
    s += (g >= 0 && g < kNumStages) ? kGoalNames[static_cast<std::size_t>(g)] : "?";
  }
  return s;
}

StageOrder make_order(const std::vector<int>& goals) {
  if (goals.size() != static_cast<std::size_t>(kNumStages))
    throw ParameterError("stage order needs exactly " + std::to_string(kNumStages) + " entries");
  StageOrder o;
  std::copy(goals.begin(), goals.end(), o.goals.begin());
  o.validate();
  return o;
}

// puck=0, door=1, button=2, drawer=3
const std::vector<StageOrder>& source_orders() {
  static const std::vector<StageOrder> orders{
      StageOrder{{0, 1, 2, 3}}, StageOrder{{0, 3, 1, 2}}, StageOrder{{3, 0, 1, 2}},
      StageOrder{{3, 1, 0, 2}}, StageOrder{{2, 0, 1, 3}}, StageOrder{{2, 1, 0, 3}},
  };
  return orders;
}

const std::vector<StageOrder>& target_orders() {
  static const std::vector<StageOrder> orders{
      StageOrder{{0, 2, 3, 1}},
      StageOrder{{3, 0, 2, 1}},
      StageOrder{{2, 3, 0, 1}},
  };
  return orders;
}

}  // namespace duskill::envsuite
