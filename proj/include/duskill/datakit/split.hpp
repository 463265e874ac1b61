#pragma once

#include <cstdint>
#include <vector>

#include "duskill/envsuite/dataset.hpp"

namespace duskill::datakit {

/// Few-shot demonstrations for one target task.
struct FewshotGroup {
  envsuite::DomainTask task;
  envsuite::TrajectorySet demos;
};

struct Splits {
  envsuite::TrajectorySet source_train;
  std::vector<FewshotGroup> fewshot;       // one entry per target task, in first-seen order
  envsuite::TrajectorySet heldout_eval;    // target trajectories not chosen as demos
};

/// Groups `target` by (domain, order), picks `k` demos per group with a
/// seeded shuffle and leaves the rest for evaluation. Throws ParameterError
/// if a group has fewer than k trajectories and ContractError if a demo
/// seed also appears in the source set.
Splits split(const envsuite::TrajectorySet& source, const envsuite::TrajectorySet& target, int k,
             std::uint64_t seed);

}  // namespace duskill::datakit
