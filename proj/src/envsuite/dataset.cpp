#include "duskill/envsuite/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "duskill/envsuite/expert.hpp"
#include "duskill/error.hpp"
#include "duskill/rng.hpp"

namespace duskill::envsuite {

namespace {

constexpr std::uint64_t kSeedMask = (1ULL << 53) - 1;  // keep seeds exact in any JSON reader

// Which stages of each target task sit above the source interval (1) or below (0).
constexpr int kHighPattern[3][kNumStages] = {{1, 1, 0, 1}, {1, 0, 1, 1}, {0, 1, 1, 1}};

std::vector<double> source_grid(const DatasetSpec& spec) {
  if (!(spec.grid_step > 0.0) || spec.source_low > spec.source_high)
    throw ParameterError("source grid needs grid_step > 0 and source_low <= source_high");
  std::vector<double> g;
  const int n = static_cast<int>(std::floor((spec.source_high - spec.source_low) / spec.grid_step + 1e-9));
  for (int i = 0; i <= n; ++i) g.push_back(spec.source_low + i * spec.grid_step);
  return g;
}

void append_number(std::string& out, float v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, p);
}

void append_number(std::string& out, double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, p);
}

}  // namespace

double Trajectory::total_return() const {
  double r = 0.0;
  for (float v : rewards) r += v;
  return r;
}

bool Trajectory::operator==(const Trajectory& o) const {
  return states == o.states && actions == o.actions && rewards == o.rewards && domain == o.domain &&
         order == o.order && seed == o.seed;
}

std::vector<DomainTask> source_domains(const DatasetSpec& spec) {
  if (spec.params_per_order < 1) throw ParameterError("params_per_order must be >= 1");
  const auto grid = source_grid(spec);
  std::vector<DomainTask> out;
  for (Family f : spec.families) {
    Rng rng(derive_seed({spec.seed, 0xd0ULL, static_cast<std::uint64_t>(f)}));
    for (const auto& order : source_orders()) {
      for (int j = 0; j < spec.params_per_order; ++j) {
        DomainTask t;
        t.domain.family = f;
        t.order = order;
        for (auto& p : t.domain.stage_params)
          p = grid[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(grid.size()) - 1))];
        out.push_back(t);
      }
    }
  }
  return out;
}

std::vector<DomainTask> target_domains(const DatasetSpec& spec, int level) {
  if (level < 0 || level > 3) throw ParameterError("target level must be in 0..3");
  const auto grid = source_grid(spec);
  std::vector<DomainTask> out;
  for (Family f : spec.families) {
    Rng rng(derive_seed({spec.seed, 0x7a1ULL, static_cast<std::uint64_t>(f)}));
    const auto& orders = target_orders();
    for (std::size_t t = 0; t < orders.size(); ++t) {
      DomainTask task;
      task.domain.family = f;
      task.order = orders[t];
      for (int j = 0; j < kNumStages; ++j) {
        double p;
        if (level == 0) {
          p = grid[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(grid.size()) - 1))];
        } else {
          p = kHighPattern[t % 3][j] ? spec.source_high + level * spec.grid_step
                                     : spec.source_low - level * spec.grid_step;
        }
        task.domain.stage_params[static_cast<std::size_t>(j)] = std::clamp(p, 0.0, 1.0);
      }
      out.push_back(task);
    }
  }
  return out;
}

std::uint64_t source_trajectory_seed(const DatasetSpec& spec, std::size_t domain_index, int traj_index) {
  return derive_seed({spec.seed, 0x50ULL, domain_index, static_cast<std::uint64_t>(traj_index)}) & kSeedMask;
}

std::uint64_t target_trajectory_seed(const DatasetSpec& spec, int level, std::size_t domain_index, int traj_index) {
  return derive_seed({spec.seed, 0x7000ULL + static_cast<std::uint64_t>(level), domain_index,
                      static_cast<std::uint64_t>(traj_index)}) &
         kSeedMask;
}

Trajectory rollout_expert(const DomainTask& task, std::uint64_t seed) {
  EnvState s = env_reset(task.domain, task.order, seed);
  std::vector<Eigen::VectorXf> obs{observe(s)};
  std::vector<Eigen::Vector2f> acts;
  Trajectory traj;
  while (!s.done) {
    const Eigen::Vector2d a = expert_action(s, task.domain, task.order);
    auto r = env_step(s, a, task.domain);
    s = r.state;
    acts.push_back(a.cast<float>());
    traj.rewards.push_back(static_cast<float>(r.reward));
    obs.push_back(observe(s));
  }
  traj.states.resize(kStateDim, static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) traj.states.col(static_cast<Eigen::Index>(i)) = obs[i];
  traj.actions.resize(kActionDim, static_cast<Eigen::Index>(acts.size()));
  for (std::size_t i = 0; i < acts.size(); ++i) traj.actions.col(static_cast<Eigen::Index>(i)) = acts[i];
  traj.domain = task.domain;
  traj.order = task.order;
  traj.seed = seed;
  return traj;
}

GeneratedData generate_dataset(const DatasetSpec& spec) {
  if (spec.trajectories_per_domain < 1) throw ParameterError("trajectories_per_domain must be >= 1");
  if (spec.fewshot_per_target < 1) throw ParameterError("fewshot_per_target must be >= 1");
  if (spec.families.empty()) throw ParameterError("at least one domain family is required");
  GeneratedData data;
  const auto sources = source_domains(spec);
  for (std::size_t d = 0; d < sources.size(); ++d) {
    for (int i = 0; i < spec.trajectories_per_domain; ++i) {
      auto traj = rollout_expert(sources[d], source_trajectory_seed(spec, d, i));
      if (traj.total_return() < kNumStages)
        throw GenerationError("expert failed on source domain " + sources[d].describe() + " (return " +
                              std::to_string(traj.total_return()) + ")");
      data.source.push_back(std::move(traj));
    }
  }
  for (int level : spec.levels) {
    const auto targets = target_domains(spec, level);
    auto& set = data.targets[level];
    for (std::size_t d = 0; d < targets.size(); ++d) {
      for (int i = 0; i < spec.fewshot_per_target; ++i) {
        auto traj = rollout_expert(targets[d], target_trajectory_seed(spec, level, d, i));
        if (traj.total_return() < kNumStages)
          throw GenerationError("expert failed on target domain " + targets[d].describe() + " (level " +
                                std::to_string(level) + ")");
        set.push_back(std::move(traj));
      }
    }
  }
  return data;
}

std::string to_json_line(const Trajectory& t) {
  std::string out = "{\"states\":[";
  for (Eigen::Index c = 0; c < t.states.cols(); ++c) {
    out += c ? ",[" : "[";
    for (Eigen::Index r = 0; r < t.states.rows(); ++r) {
      if (r) out += ',';
      append_number(out, t.states(r, c));
    }
    out += ']';
  }
  out += "],\"actions\":[";
  for (Eigen::Index c = 0; c < t.actions.cols(); ++c) {
    out += c ? ",[" : "[";
    for (Eigen::Index r = 0; r < t.actions.rows(); ++r) {
      if (r) out += ',';
      append_number(out, t.actions(r, c));
    }
    out += ']';
  }
  out += "],\"rewards\":[";
  for (std::size_t i = 0; i < t.rewards.size(); ++i) {
    if (i) out += ',';
    append_number(out, t.rewards[i]);
  }
  out += "],\"domain\":{\"family\":\"" + to_string(t.domain.family) + "\",\"stage_params\":[";
  for (int i = 0; i < kNumStages; ++i) {
    if (i) out += ',';
    append_number(out, t.domain.stage_params[static_cast<std::size_t>(i)]);
  }
  out += "]},\"order\":[";
  for (int i = 0; i < kNumStages; ++i) {
    if (i) out += ',';
    out += std::to_string(t.order.goals[static_cast<std::size_t>(i)]);
  }
  out += "],\"seed\":" + std::to_string(t.seed) + "}";
  return out;
}

Trajectory from_json_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FileError(std::string("malformed trajectory line: ") + e.what());
  }
  try {
    Trajectory t;
    const auto& st = j.at("states");
    const auto& ac = j.at("actions");
    t.states.resize(kStateDim, static_cast<Eigen::Index>(st.size()));
    for (std::size_t c = 0; c < st.size(); ++c) {
      if (st[c].size() != static_cast<std::size_t>(kStateDim)) throw FileError("state vector has wrong length");
      for (int r = 0; r < kStateDim; ++r)
        t.states(r, static_cast<Eigen::Index>(c)) = st[c][static_cast<std::size_t>(r)].get<float>();
    }
    t.actions.resize(kActionDim, static_cast<Eigen::Index>(ac.size()));
    for (std::size_t c = 0; c < ac.size(); ++c) {
      if (ac[c].size() != static_cast<std::size_t>(kActionDim)) throw FileError("action vector has wrong length");
      for (int r = 0; r < kActionDim; ++r)
        t.actions(r, static_cast<Eigen::Index>(c)) = ac[c][static_cast<std::size_t>(r)].get<float>();
    }
    t.rewards = j.at("rewards").get<std::vector<float>>();
    t.domain = make_domain(parse_family(j.at("domain").at("family").get<std::string>()),
                           j.at("domain").at("stage_params").get<std::vector<double>>());
    t.order = make_order(j.at("order").get<std::vector<int>>());
    t.seed = j.at("seed").get<std::uint64_t>();
    if (t.states.cols() != t.actions.cols() + 1 || t.rewards.size() != static_cast<std::size_t>(t.actions.cols()))
      throw FileError("trajectory length fields are inconsistent");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FileError(std::string("trajectory line missing fields: ") + e.what());
  }
}

void write_jsonl(const std::filesystem::path& path, const TrajectorySet& set) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FileError("cannot write " + path.string());
  for (const auto& t : set) f << to_json_line(t) << '\n';
  if (!f) throw FileError("write failed for " + path.string());
}

TrajectorySet read_jsonl(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FileError("cannot open " + path.string());
  TrajectorySet out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(from_json_line(line));
  }
  return out;
}

int active_goal(const Trajectory& traj, int t) {
  int stage = 0;
  while (stage < kNumStages && traj.states(4 + stage, t) > 0.5f) ++stage;
  if (stage == kNumStages) stage = kNumStages - 1;
  return traj.order.goals[static_cast<std::size_t>(stage)];
}

}  // namespace duskill::envsuite
