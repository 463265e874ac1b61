#include "duskill/datakit/split.hpp"

#include <algorithm>
#include <unordered_set>

#include "duskill/error.hpp"
#include "duskill/rng.hpp"

namespace duskill::datakit {

Splits split(const envsuite::TrajectorySet& source, const envsuite::TrajectorySet& target, int k,
             std::uint64_t seed) {
  if (k < 1) throw ParameterError("few-shot count must be >= 1");
  Splits out;
  out.source_train = source;

  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const envsuite::DomainTask task{target[i].domain, target[i].order};
    auto it = std::find_if(out.fewshot.begin(), out.fewshot.end(),
                           [&](const FewshotGroup& g) { return g.task == task; });
    if (it == out.fewshot.end()) {
      out.fewshot.push_back({task, {}});
      groups.emplace_back();
      groups.back().push_back(i);
    } else {
      groups[static_cast<std::size_t>(it - out.fewshot.begin())].push_back(i);
    }
  }

  std::unordered_set<std::uint64_t> source_seeds;
  for (const auto& t : source) source_seeds.insert(t.seed);

  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& idx = groups[g];
    if (static_cast<int>(idx.size()) < k)
      throw ParameterError("requested " + std::to_string(k) + " few-shot trajectories but target task " +
                           out.fewshot[g].task.describe() + " has only " + std::to_string(idx.size()));
    Rng rng(derive_seed({seed, 0x5b17ULL, g}));
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& t = target[idx[j]];
      if (static_cast<int>(j) < k) {
        if (source_seeds.count(t.seed))
          throw ContractError("few-shot trajectory seed " + std::to_string(t.seed) + " also appears in source data");
        out.fewshot[g].demos.push_back(t);
      } else {
        out.heldout_eval.push_back(t);
      }
    }
  }
  return out;
}

}  // namespace duskill::datakit
