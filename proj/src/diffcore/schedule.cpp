#include "duskill/diffcore/schedule.hpp"

#include "duskill/error.hpp"

namespace duskill::diffcore {

void DiffusionSchedule::check_step(int k) const {
  if (k < 1 || k > spec_.K)
    throw ParameterError("diffusion step " + std::to_string(k) + " outside 1.." + std::to_string(spec_.K));
}

DiffusionSchedule build_schedule(int K, double beta_min, double beta_max) {
  if (K < 1) throw ParameterError("diffusion schedule needs K >= 1");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
    throw ParameterError("diffusion schedule needs 0 < beta_min <= beta_max < 1");
  DiffusionSchedule s;
  s.spec_ = {K, beta_min, beta_max};
  double prod = 1.0;
  for (int k = 1; k <= K; ++k) {
    const double b = K == 1 ? beta_min : beta_min + (beta_max - beta_min) * (k - 1) / (K - 1);
    s.beta_.push_back(b);
    s.alpha_.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bar_.push_back(prod);
    s.zeta_.push_back(0.0);
  }
  return s;
}

nlohmann::json to_json(const ScheduleSpec& s) {
  return {{"K", s.K}, {"beta_min", s.beta_min}, {"beta_max", s.beta_max}};
}

ScheduleSpec schedule_from_json(const nlohmann::json& j) {
  try {
    return {j.at("K").get<int>(), j.at("beta_min").get<double>(), j.at("beta_max").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FileError(std::string("malformed schedule spec: ") + e.what());
  }
}

}  // namespace duskill::diffcore
