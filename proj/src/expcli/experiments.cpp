#include "duskill/expcli/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "duskill/datakit/norm.hpp"
#include "duskill/datakit/segment.hpp"
#include "duskill/datakit/split.hpp"
#include "duskill/downstream/fewshot.hpp"
#include "duskill/downstream/rollout.hpp"
#include "duskill/downstream/sac.hpp"
#include "duskill/error.hpp"
#include "duskill/nn/tensor_io.hpp"
#include "duskill/rng.hpp"
#include "duskill/skillnet/checkpoint.hpp"

namespace duskill::expcli {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSeedMask = (1ULL << 53) - 1;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Wall-clock time never enters a report, so reports stay bit-identical
// across reruns; it goes to a sidecar next to the file instead.
void write_timing(const fs::path& report, double seconds, json extra = json::object()) {
  extra["seconds"] = seconds;
  fs::path p = report;
  p.replace_extension(".timing.json");
  write_json(p, extra);
}

std::string family_label(const envsuite::DomainParam& d) { return envsuite::to_string(d.family); }

struct Cell {
  std::uint64_t seed = 0;
  int level = 0;
  int task = 0;
  envsuite::DomainTask domain_task;
  std::vector<double> returns;
  std::vector<double> loss_curve;
};

json to_json(const Cell& c) {
  return {{"seed", c.seed},
          {"level", level_name(c.level)},
          {"task", c.task},
          {"domain", c.domain_task.domain.describe()},
          {"family", family_label(c.domain_task.domain)},
          {"order", c.domain_task.order.describe()},
          {"returns", c.returns},
          {"mean_return", mean_of(c.returns)},
          {"loss_curve", c.loss_curve}};
}

std::uint64_t eval_tag(int level, int task) {
  return derive_seed({0xe7a1ULL, static_cast<std::uint64_t>(level), static_cast<std::uint64_t>(task)});
}

std::uint64_t split_seed(const ExperimentConfig& c, int level) {
  return derive_seed({c.dataset.seed, 0x5b1ULL, static_cast<std::uint64_t>(level)});
}

struct LoadedModel {
  skillnet::BundlePtr bundle;
  std::uint64_t seed = 0;
};

std::vector<LoadedModel> load_all(const std::vector<fs::path>& checkpoints) {
  if (checkpoints.empty()) throw ParameterError("at least one checkpoint is required");
  std::vector<LoadedModel> out;
  for (const auto& p : checkpoints) {
    LoadedModel m;
    m.bundle = skillnet::load_checkpoint(p);
    m.seed = m.bundle->config().init_seed;
    if (!out.empty() && m.bundle->config().variant != out.front().bundle->config().variant)
      throw ParameterError("checkpoints mix variants " + skillnet::to_string(out.front().bundle->config().variant) +
                           " and " + skillnet::to_string(m.bundle->config().variant));
    out.push_back(std::move(m));
  }
  return out;
}

// Adapts every model to every target task of `level` with `shots` demos.
std::vector<Cell> fewshot_cells(const ExperimentConfig& c, const envsuite::GeneratedData& data,
                                const std::vector<LoadedModel>& models, int level, int shots) {
  auto it = data.targets.find(level);
  if (it == data.targets.end())
    throw ParameterError("dataset has no trajectories for target level " + std::to_string(level));
  const auto splits = datakit::split(data.source, it->second, shots, split_seed(c, level));
  std::vector<Cell> cells;
  for (const auto& m : models) {
    for (std::size_t t = 0; t < splits.fewshot.size(); ++t) {
      const auto& group = splits.fewshot[t];
      downstream::FewshotConfig fc = c.fewshot;
      fc.seed = derive_seed({m.seed, 0xad0ULL, static_cast<std::uint64_t>(level), t});
      const Adapted a = adapt(m.bundle, group.demos, fc);
      Cell cell;
      cell.seed = m.seed;
      cell.level = level;
      cell.task = static_cast<int>(t);
      cell.domain_task = group.task;
      cell.returns = evaluate(a, group.task, c.eval_episodes, eval_tag(level, static_cast<int>(t)));
      cell.loss_curve = a.loss_curve;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

// Per-seed mean over the selected cells, then mean and spread over seeds.
MetricsRow summarize(const std::vector<Cell>& cells, const std::string& level, const std::string& domain,
                     const std::string& variant) {
  std::map<std::uint64_t, std::vector<double>> per_seed;
  std::set<int> tasks;
  for (const auto& c : cells) {
    if (domain != "all" && family_label(c.domain_task.domain) != domain) continue;
    auto& v = per_seed[c.seed];
    v.insert(v.end(), c.returns.begin(), c.returns.end());
    tasks.insert(c.task);
  }
  std::vector<double> means;
  for (const auto& [seed, v] : per_seed) means.push_back(mean_of(v));
  MetricsRow row;
  row.domain = domain;
  row.level = level;
  row.variant = variant;
  row.mean = mean_of(means);
  row.std = sample_std(means);
  row.n_seeds = static_cast<int>(means.size());
  row.n_tasks = static_cast<int>(tasks.size());
  return row;
}

void add_rows(MetricsTable& table, const std::vector<Cell>& cells, int level, const std::string& variant) {
  table.rows.push_back(summarize(cells, level_name(level), "all", variant));
  std::set<std::string> families;
  for (const auto& c : cells) families.insert(family_label(c.domain_task.domain));
  if (families.size() > 1)
    for (const auto& f : families) table.rows.push_back(summarize(cells, level_name(level), f, variant));
}

Eigen::MatrixXd to_double(const Eigen::MatrixXf& m) { return m.cast<double>(); }

json matrix_columns(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    std::vector<double> col(m.col(c).data(), m.col(c).data() + m.rows());
    out.push_back(col);
  }
  return out;
}

// Relabels arbitrary keys as 0, 1, ... in first-seen order.
template <typename Key>
std::vector<int> dense_labels(const std::vector<Key>& keys) {
  std::map<Key, int> ids;
  std::vector<int> out;
  for (const auto& k : keys) out.push_back(ids.emplace(k, static_cast<int>(ids.size())).first->second);
  return out;
}

int distinct(const std::vector<int>& labels) { return static_cast<int>(std::set<int>(labels.begin(), labels.end()).size()); }

}  // namespace

fs::path data_dir(const ExperimentConfig& c) { return fs::path(c.output_dir) / "data"; }

fs::path checkpoint_dir(const ExperimentConfig& c, std::uint64_t seed) {
  return fs::path(c.output_dir) / "checkpoints" / (skillnet::to_string(c.model.variant) + "_seed" + std::to_string(seed));
}

fs::path reports_dir(const ExperimentConfig& c) { return fs::path(c.output_dir) / "reports"; }

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  nn::write_file_bytes(path, j.dump(2) + "\n");
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw FileError("missing file " + path.string());
  try {
    return json::parse(nn::read_file_bytes(path));
  } catch (const json::exception& e) {
    throw FileError(path.string() + " is not valid JSON: " + e.what());
  }
}

envsuite::GeneratedData load_or_generate_data(const ExperimentConfig& c) {
  const fs::path dir = data_dir(c);
  const json spec = to_json(c.dataset);
  auto level_file = [&](int level) { return dir / ("target_" + level_name(level) + ".jsonl"); };
  if (fs::exists(dir / "spec.json") && read_json(dir / "spec.json") == spec) {
    bool complete = fs::exists(dir / "source.jsonl");
    for (int level : c.dataset.levels) complete = complete && fs::exists(level_file(level));
    if (complete) {
      envsuite::GeneratedData data;
      data.source = envsuite::read_jsonl(dir / "source.jsonl");
      for (int level : c.dataset.levels) data.targets[level] = envsuite::read_jsonl(level_file(level));
      return data;
    }
  }
  auto data = envsuite::generate_dataset(c.dataset);
  fs::create_directories(dir);
  envsuite::write_jsonl(dir / "source.jsonl", data.source);
  for (const auto& [level, set] : data.targets) envsuite::write_jsonl(level_file(level), set);
  write_json(dir / "spec.json", spec);  // last, so a partial write is never mistaken for a cache hit
  return data;
}

fs::path run_gen_data(const ExperimentConfig& c) {
  fs::remove(data_dir(c) / "spec.json");
  load_or_generate_data(c);
  return data_dir(c);
}

fs::path run_pretrain(const ExperimentConfig& c, std::uint64_t seed,
                      const std::function<void(const skillnet::LogEntry&)>& progress) {
  const ExperimentConfig cs = for_seed(c, seed);
  const auto data = load_or_generate_data(cs);
  const auto norm = datakit::fit_norm(data.source);
  const auto seg = datakit::segment(data.source, cs.model.h, 1);
  if (seg.segments.count() == 0) throw ParameterError("no trajectory is long enough for h=" + std::to_string(cs.model.h));
  const auto normalized = skillnet::normalize_segments(seg.segments, norm);

  Stopwatch clock;
  const auto result = skillnet::train_offline(normalized, norm, cs.model, cs.train, progress);
  const double seconds = clock.seconds();

  const fs::path dir = checkpoint_dir(cs, seed);
  fs::create_directories(dir);
  skillnet::save_checkpoint(dir, *result.bundle);
  std::string log;
  for (const auto& e : result.log) {
    json line = skillnet::to_json(e.report);
    line["step"] = e.step;
    log += line.dump() + "\n";
  }
  nn::write_file_bytes(dir / "loss_log.jsonl", log);
  write_json(dir / "timing.json", {{"seconds", seconds},
                                   {"steps", cs.train.steps},
                                   {"seconds_per_step", seconds / static_cast<double>(std::max(1L, cs.train.steps))}});
  return dir;
}

Adapted adapt(const skillnet::BundlePtr& bundle, const envsuite::TrajectorySet& demos,
              const downstream::FewshotConfig& config) {
  Adapted out;
  if (bundle->config().variant != skillnet::Variant::BC) {
    auto r = downstream::fewshot_finetune(downstream::init_policy(*bundle), *bundle, demos, config);
    out.bundle = bundle;
    out.policy = std::move(r.policy);
    out.loss_curve = std::move(r.loss_curve);
    return out;
  }
  // Behavior cloning has no latent policy: fine-tune its network directly.
  auto tuned = std::make_shared<skillnet::ModelBundle>(*bundle);
  const auto seg = datakit::segment(demos, tuned->config().h, 1);
  if (seg.segments.count() == 0) throw ParameterError("demonstrations are shorter than one skill window");
  const auto segs = skillnet::normalize_segments(seg.segments, tuned->norm);
  skillnet::TrainConfig tc;
  tc.lr = tc.bc_lr = config.lr;
  skillnet::Optimizers opt(tuned->model, tc);
  Rng rng(derive_seed({config.seed, 0xf5ULL}));
  skillnet::Grads<float> grads;
  double running = 0.0;
  for (long step = 1; step <= config.steps; ++step) {
    std::vector<int> idx(static_cast<std::size_t>(config.batch_size));
    for (auto& i : idx) i = static_cast<int>(rng.integer(0, segs.count() - 1));
    const auto batch = skillnet::make_batch(segs, idx);
    const auto draw = tuned->model.draw_noise(static_cast<Eigen::Index>(idx.size()), rng);
    running += tuned->model.losses(batch, draw, &grads).rec;
    opt.apply(tuned->model, grads);
    if (step % config.log_interval == 0) {
      out.loss_curve.push_back(running / config.log_interval);
      running = 0.0;
    }
  }
  out.bundle = std::move(tuned);
  return out;
}

std::vector<double> evaluate(const Adapted& adapted, const envsuite::DomainTask& task, int episodes,
                             std::uint64_t tag) {
  std::vector<downstream::EpisodeSpec> specs;
  for (int e = 0; e < episodes; ++e)
    specs.push_back({task, derive_seed({tag, static_cast<std::uint64_t>(e)}) & kSeedMask});
  const auto trajs = downstream::rollout_batch(adapted.policy ? &*adapted.policy : nullptr, *adapted.bundle, specs);
  std::vector<double> returns;
  for (const auto& t : trajs) returns.push_back(t.total_return());
  return returns;
}

FewshotOutcome run_fewshot(const ExperimentConfig& c, const std::vector<fs::path>& checkpoints, int shots) {
  Stopwatch clock;
  const auto models = load_all(checkpoints);
  const auto data = load_or_generate_data(c);
  const std::string variant = skillnet::to_string(models.front().bundle->config().variant);

  FewshotOutcome out;
  json cells = json::array();
  std::map<int, double> level_mean;
  for (int level : c.dataset.levels) {
    const auto lc = fewshot_cells(c, data, models, level, shots);
    add_rows(out.table, lc, level, variant);
    level_mean[level] = out.table.find(level_name(level)).mean;
    for (const auto& cell : lc) cells.push_back(to_json(cell));
  }
  out.report = {{"kind", "fewshot"},
                {"variant", variant},
                {"shots", shots},
                {"eval_episodes", c.eval_episodes},
                {"table", out.table.to_json()},
                {"cells", cells}};
  // Relative drop from source-level to hardest-level return.
  if (level_mean.count(0) && level_mean.size() > 1 && level_mean.at(0) != 0.0) {
    const int hardest = level_mean.rbegin()->first;
    out.report["degradation"] = {{"level", level_name(hardest)},
                                 {"value", (level_mean.at(0) - level_mean.at(hardest)) / level_mean.at(0)}};
  }
  out.path = reports_dir(c) / ("fewshot_" + variant + "_k" + std::to_string(shots) + ".json");
  write_json(out.path, out.report);
  fs::path md = out.path;
  md.replace_extension(".md");
  nn::write_file_bytes(md, out.table.to_markdown());
  write_timing(out.path, clock.seconds());
  return out;
}

json run_fewshot_sweep(const ExperimentConfig& c, const std::vector<fs::path>& checkpoints, fs::path* written) {
  Stopwatch clock;
  const auto models = load_all(checkpoints);
  const auto data = load_or_generate_data(c);
  const std::string variant = skillnet::to_string(models.front().bundle->config().variant);
  json points = json::array();
  for (int k : c.sweep_shots) {
    const auto cells = fewshot_cells(c, data, models, c.sweep_level, k);
    const auto row = summarize(cells, level_name(c.sweep_level), "all", variant);
    json cj = json::array();
    for (const auto& cell : cells) cj.push_back(to_json(cell));
    points.push_back({{"shots", k}, {"mean", row.mean}, {"std", row.std}, {"n_seeds", row.n_seeds}, {"cells", cj}});
  }
  json report = {{"kind", "sweep"},
                 {"variant", variant},
                 {"level", level_name(c.sweep_level)},
                 {"eval_episodes", c.eval_episodes},
                 {"points", points}};
  const fs::path path = reports_dir(c) / ("sweep_" + variant + "_" + level_name(c.sweep_level) + ".json");
  write_json(path, report);
  write_timing(path, clock.seconds());
  if (written) *written = path;
  return report;
}

json run_rl(const ExperimentConfig& c, const fs::path& checkpoint, fs::path* written,
            const std::function<void(const std::string&)>& progress) {
  Stopwatch clock;
  const auto bundle = skillnet::load_checkpoint(checkpoint);
  const std::uint64_t seed = bundle->config().init_seed;
  const ExperimentConfig cs = for_seed(c, seed);
  const std::string variant = skillnet::to_string(bundle->config().variant);
  if (!bundle->config().has_priors())
    throw UnsupportedVariantError("online RL needs a skill prior; " + variant + " has none");

  const auto tasks = envsuite::target_domains(cs.dataset, cs.rl_level);
  if (cs.rl_task < 0 || cs.rl_task >= static_cast<int>(tasks.size()))
    throw ParameterError("rl_task " + std::to_string(cs.rl_task) + " out of range (" + std::to_string(tasks.size()) +
                         " tasks at " + level_name(cs.rl_level) + ")");
  const auto& task = tasks[static_cast<std::size_t>(cs.rl_task)];
  const auto data = load_or_generate_data(cs);
  auto it = data.targets.find(cs.rl_level);
  if (it == data.targets.end()) throw ParameterError("dataset has no trajectories for " + level_name(cs.rl_level));
  envsuite::TrajectorySet demo;
  for (const auto& t : it->second)
    if (t.domain == task.domain && t.order == task.order) {
      demo.push_back(t);
      break;
    }
  if (demo.empty()) throw ParameterError("no demonstration recorded for " + task.describe());

  if (progress) progress("warm start on one demonstration");
  const auto warm = downstream::warmstart(downstream::init_policy(*bundle), *bundle, demo, cs.fewshot);
  if (progress) progress("online training on " + task.describe());
  const auto result = downstream::run_sac(warm.policy, *bundle, task, cs.rl, [&](const downstream::CurvePoint& p) {
    if (progress)
      progress("step " + std::to_string(p.env_step) + " return " + std::to_string(p.mean_return) + " alpha " +
               std::to_string(p.alpha));
  });

  json curve = json::array();
  for (const auto& p : result.curve)
    curve.push_back({{"env_step", p.env_step},
                     {"mean_return", p.mean_return},
                     {"episodes", p.episodes},
                     {"alpha", p.alpha},
                     {"kl", p.kl},
                     {"critic_loss", p.critic_loss}});
  json evals = json::array();
  for (const auto& e : result.evals)
    evals.push_back({{"env_step", e.env_step}, {"returns", e.returns}, {"mean", e.mean()}});
  json report = {{"kind", "rl"},
                 {"variant", variant},
                 {"seed", seed},
                 {"level", level_name(cs.rl_level)},
                 {"task", task.describe()},
                 {"warmstart_loss", warm.loss_curve},
                 {"curve", curve},
                 {"evals", evals}};
  if (!result.evals.empty())
    report["improvement"] = result.evals.back().mean() - result.evals.front().mean();
  const fs::path path = reports_dir(cs) / ("rl_" + variant + "_seed" + std::to_string(seed) + ".json");
  write_json(path, report);
  write_timing(path, clock.seconds());
  if (written) *written = path;
  return report;
}

json export_embeddings(const fs::path& checkpoint, const envsuite::TrajectorySet& trajs, std::uint64_t seed) {
  const auto bundle = skillnet::load_checkpoint(checkpoint);
  const auto& cfg = bundle->config();
  const std::string variant = skillnet::to_string(cfg.variant);
  if (!cfg.has_priors()) throw UnsupportedVariantError(variant + " has no skill encoder to embed with");
  json warnings = json::array();
  if (bundle->step_count == 0) {
    warnings.push_back("checkpoint is untrained (0 steps); embeddings are those of the initial networks");
    std::cerr << "warning: " << warnings.back().get<std::string>() << "\n";
  }

  const auto seg = datakit::segment(trajs, cfg.h, cfg.h);
  const int n = seg.segments.count();
  if (n == 0) throw ParameterError("no segment of length h in the given trajectories");
  const auto segs = skillnet::normalize_segments(seg.segments, bundle->norm);
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  const auto batch = skillnet::make_batch(segs, all);
  const Eigen::MatrixXf z_rho = bundle->model.encode_invariant(batch.window).mean;

  std::set<envsuite::Family> families;
  for (const auto& d : seg.segments.domains) families.insert(d.family);
  std::vector<std::string> domain_keys;
  for (const auto& d : seg.segments.domains)
    domain_keys.push_back(families.size() > 1 ? envsuite::to_string(d.family) : d.describe());
  const std::vector<int> task_labels = seg.segments.task_labels;
  const std::vector<int> domain_labels = dense_labels(domain_keys);

  json labels = json::array();
  for (int i = 0; i < n; ++i)
    labels.push_back({{"task", task_labels[static_cast<std::size_t>(i)]},
                      {"domain", domain_keys[static_cast<std::size_t>(i)]},
                      {"domain_id", domain_labels[static_cast<std::size_t>(i)]}});

  // Each embedding is clustered with as many clusters as each labeling has
  // classes; the score is the adjusted Rand index against that labeling.
  auto analyse = [&](const Eigen::MatrixXd& z) {
    const std::uint64_t ks = derive_seed({seed, 0x6b3ULL});
    const auto by_task = kmeans(z, distinct(task_labels), ks);
    const auto by_domain = kmeans(z, distinct(domain_labels), ks);
    return json{{"mean", matrix_columns(z)},
                {"projection", matrix_columns(pca_project(z, 2))},
                {"ari_task", adjusted_rand_index(by_task, task_labels)},
                {"ari_domain", adjusted_rand_index(by_domain, domain_labels)}};
  };

  json report = {{"kind", "embedding"},
                 {"variant", variant},
                 {"seed", cfg.init_seed},
                 {"step_count", bundle->step_count},
                 {"segments", n},
                 {"labels", labels},
                 {"z_rho", analyse(to_double(z_rho))},
                 {"warnings", warnings}};
  if (cfg.hierarchical())
    report["z_sigma"] = analyse(to_double(bundle->model.encode_variant(z_rho, batch.omega).mean));
  return report;
}

}  // namespace duskill::expcli
