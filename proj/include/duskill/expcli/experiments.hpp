#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "duskill/downstream/policy.hpp"
#include "duskill/envsuite/dataset.hpp"
#include "duskill/expcli/config.hpp"
#include "duskill/expcli/metrics.hpp"
#include "duskill/skillnet/trainer.hpp"

namespace duskill::expcli {

namespace fs = std::filesystem;

/// Output layout under config.output_dir.
fs::path data_dir(const ExperimentConfig& c);
fs::path checkpoint_dir(const ExperimentConfig& c, std::uint64_t seed);
fs::path reports_dir(const ExperimentConfig& c);

/// Writes a JSON document (pretty, trailing newline).
void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);

/// Dataset for the config, read from data_dir when it was generated from
/// the same dataset spec, otherwise generated and written there.
envsuite::GeneratedData load_or_generate_data(const ExperimentConfig& c);

/// gen-data: returns the data directory.
fs::path run_gen_data(const ExperimentConfig& c);

/// pretrain: trains config.model.variant with `seed`, writes the
/// checkpoint, its loss log (loss_log.jsonl, one LossReport per logged
/// step) and a timing.json sidecar. Returns the checkpoint directory.
fs::path run_pretrain(const ExperimentConfig& c, std::uint64_t seed,
                      const std::function<void(const skillnet::LogEntry&)>& progress = {});

/// A bundle adapted to one target task.
struct Adapted {
  skillnet::BundlePtr bundle;             // the frozen bundle (BC: its fine-tuned copy)
  std::optional<downstream::Policy> policy;
  std::vector<double> loss_curve;
};

/// Few-shot adaptation with the variant's mechanism: policy-only
/// fine-tuning through the frozen decoder, or (BC) supervised fine-tuning.
Adapted adapt(const skillnet::BundlePtr& bundle, const envsuite::TrajectorySet& demos,
              const downstream::FewshotConfig& config);

/// Episode returns of an adapted model on a task; seeds depend only on `tag`
/// and the episode index so every variant sees the same starts.
std::vector<double> evaluate(const Adapted& adapted, const envsuite::DomainTask& task, int episodes,
                             std::uint64_t tag);

struct FewshotOutcome {
  MetricsTable table;
  nlohmann::json report;
  fs::path path;
};

/// fewshot: for every checkpoint (one per seed) and every level, adapts to
/// each target task with `shots` demos and evaluates eval_episodes episodes.
FewshotOutcome run_fewshot(const ExperimentConfig& c, const std::vector<fs::path>& checkpoints, int shots);

/// fewshot --sweep: mean level-`rl_level` return for each entry of sweep_shots.
nlohmann::json run_fewshot_sweep(const ExperimentConfig& c, const std::vector<fs::path>& checkpoints,
                                 fs::path* written = nullptr);

/// rl: warm start from one demonstration of the configured target task,
/// then prior-regularized SAC. Returns the report (also written to disk).
nlohmann::json run_rl(const ExperimentConfig& c, const fs::path& checkpoint, fs::path* written = nullptr,
                      const std::function<void(const std::string&)>& progress = {});

/// embed: per-segment latent means with task and domain labels, a 2D
/// principal-direction projection and 2-means adjusted-Rand scores.
/// Segments are non-overlapping windows (stride h) of `trajs`.
nlohmann::json export_embeddings(const fs::path& checkpoint, const envsuite::TrajectorySet& trajs,
                                 std::uint64_t seed = 0);

/// plot: one SVG per report, named after the report file.
std::vector<fs::path> plot_reports(const std::vector<fs::path>& reports, const fs::path& out_dir);

}  // namespace duskill::expcli
