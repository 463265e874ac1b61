#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "duskill/envsuite/domain.hpp"
#include "duskill/envsuite/env.hpp"

namespace duskill::envsuite {

/// One recorded episode.
struct Trajectory {
  Eigen::MatrixXf states;   // kStateDim x (T_ep + 1)
  Eigen::MatrixXf actions;  // kActionDim x T_ep
  std::vector<float> rewards;
  DomainParam domain;
  StageOrder order;
  std::uint64_t seed = 0;

  int length() const { return static_cast<int>(actions.cols()); }
  double total_return() const;
  bool operator==(const Trajectory& o) const;
};

using TrajectorySet = std::vector<Trajectory>;

/// A task instance: domain parameterization plus sub-task order.
struct DomainTask {
  DomainParam domain;
  StageOrder order;

  std::string describe() const { return domain.describe() + " " + order.describe(); }
  bool operator==(const DomainTask&) const = default;
};

/// Source grid and target levels. Source stage parameters are drawn from
/// the grid {source_low, source_low + grid_step, ..., source_high}; a level-k
/// target places each stage parameter k grid steps outside that interval.
struct DatasetSpec {
  std::vector<Family> families{Family::Speed};
  int params_per_order = 1;
  int trajectories_per_domain = 20;
  int fewshot_per_target = 3;
  std::vector<int> levels{0, 1, 2, 3};
  double source_low = 0.35;
  double source_high = 0.65;
  double grid_step = 0.1;
  std::uint64_t seed = 0;
};

std::vector<DomainTask> source_domains(const DatasetSpec& spec);
std::vector<DomainTask> target_domains(const DatasetSpec& spec, int level);

/// Seeds used for trajectories; source and target streams never overlap
/// because each is derived with a distinct tag (and checked by datakit::split).
std::uint64_t source_trajectory_seed(const DatasetSpec& spec, std::size_t domain_index, int traj_index);
std::uint64_t target_trajectory_seed(const DatasetSpec& spec, int level, std::size_t domain_index, int traj_index);

/// Runs the scripted expert for one episode.
Trajectory rollout_expert(const DomainTask& task, std::uint64_t seed);

struct GeneratedData {
  TrajectorySet source;
  std::map<int, TrajectorySet> targets;  // keyed by level (0 = source level)
};

/// Rolls the expert over every source domain and every target domain of the
/// requested levels. Throws GenerationError naming the domain if the expert
/// fails to collect all four rewards anywhere.
GeneratedData generate_dataset(const DatasetSpec& spec);

/// JSON-lines persistence, one trajectory per line.
std::string to_json_line(const Trajectory& t);
Trajectory from_json_line(const std::string& line);
void write_jsonl(const std::filesystem::path& path, const TrajectorySet& set);
TrajectorySet read_jsonl(const std::filesystem::path& path);

/// Goal id of the active sub-task at column `t` of a trajectory.
int active_goal(const Trajectory& traj, int t);

}  // namespace duskill::envsuite
