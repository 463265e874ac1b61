// duskill: command-line entry point for data generation, pretraining,
// adaptation, embedding export and plotting.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "duskill/error.hpp"
#include "duskill/expcli/config.hpp"
#include "duskill/expcli/experiments.hpp"
#include "duskill/skillnet/model.hpp"

namespace {

using namespace duskill;
using nlohmann::json;

struct Common {
  std::string config_path;
  std::string out;
  std::string variant;
};

expcli::ExperimentConfig resolve(const Common& o) {
  expcli::ExperimentConfig c = o.config_path.empty() ? expcli::ExperimentConfig{} : expcli::load_config(o.config_path);
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.variant.empty()) c.model.variant = skillnet::parse_variant(o.variant);
  return c;
}

std::vector<std::uint64_t> seeds_of(const expcli::ExperimentConfig& c, const std::optional<std::uint64_t>& seed) {
  return seed ? std::vector<std::uint64_t>{*seed} : c.seeds;
}

std::vector<expcli::fs::path> checkpoints_of(const expcli::ExperimentConfig& c, const std::vector<std::string>& given,
                                             const std::optional<std::uint64_t>& seed) {
  std::vector<expcli::fs::path> out(given.begin(), given.end());
  if (out.empty())
    for (auto s : seeds_of(c, seed)) out.push_back(expcli::checkpoint_dir(c, s));
  return out;
}

void add_common(CLI::App* app, Common& o) {
  app->add_option("--config", o.config_path, "experiment config (JSON)");
  app->add_option("--out", o.out, "output directory (overrides output_dir)");
  app->add_option("--variant", o.variant, "DuSkill, HDU, DU, SPiRLc or BC (overrides the config)");
}

int fail(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline skill diffusion: pretraining and domain adaptation experiments"};
  app.require_subcommand(1);

  Common common;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> checkpoints;
  std::vector<std::string> reports;
  std::optional<int> shots;
  bool sweep = false;
  bool quiet = false;
  app.add_flag("--quiet", quiet, "suppress progress output");

  auto* gen = app.add_subcommand("gen-data", "generate source and target trajectories");
  add_common(gen, common);

  auto* pre = app.add_subcommand("pretrain", "train skill embeddings, priors and decoder");
  add_common(pre, common);
  pre->add_option("--seed", seed, "train only this seed (default: every configured seed)");

  auto* few = app.add_subcommand("fewshot", "few-shot adaptation and evaluation on target levels");
  add_common(few, common);
  few->add_option("--seed", seed, "use only this seed's checkpoint");
  few->add_option("--checkpoint", checkpoints, "checkpoint directory (repeatable)");
  few->add_option("--shots", shots, "demonstrations per target task (overrides the config)");
  few->add_flag("--sweep", sweep, "evaluate every entry of sweep_shots instead");

  auto* rl = app.add_subcommand("rl", "warm start plus prior-regularized online RL");
  add_common(rl, common);
  rl->add_option("--seed", seed, "use only this seed's checkpoint");
  rl->add_option("--checkpoint", checkpoints, "checkpoint directory (repeatable)");

  auto* emb = app.add_subcommand("embed", "export latent embeddings of the source segments");
  add_common(emb, common);
  emb->add_option("--seed", seed, "use only this seed's checkpoint");
  emb->add_option("--checkpoint", checkpoints, "checkpoint directory (repeatable)");

  auto* plot = app.add_subcommand("plot", "render reports as SVG");
  plot->add_option("reports", reports, "report files (JSON, or a checkpoint's loss_log.jsonl)")->required();
  plot->add_option("--out", common.out, "directory for the images (default: next to each report)");

  CLI11_PARSE(app, argc, argv);

  auto log = [&](const std::string& line) {
    if (!quiet) std::cerr << line << "\n";
  };

  try {
    json result;
    if (*gen) {
      const auto c = resolve(common);
      result = {{"data_dir", expcli::run_gen_data(c).string()}};
    } else if (*pre) {
      const auto c = resolve(common);
      json dirs = json::array();
      for (auto s : seeds_of(c, seed)) {
        log("pretraining " + skillnet::to_string(c.model.variant) + " seed " + std::to_string(s));
        const auto dir = expcli::run_pretrain(c, s, [&](const skillnet::LogEntry& e) {
          log("  step " + std::to_string(e.step) + " " + skillnet::to_json(e.report).dump());
        });
        dirs.push_back(dir.string());
      }
      result = {{"checkpoints", dirs}};
    } else if (*few) {
      auto c = resolve(common);
      if (shots) c.shots = *shots;
      const auto cps = checkpoints_of(c, checkpoints, seed);
      if (sweep) {
        expcli::fs::path written;
        expcli::run_fewshot_sweep(c, cps, &written);
        result = {{"report", written.string()}};
      } else {
        const auto out = expcli::run_fewshot(c, cps, c.shots);
        std::cout << out.table.to_markdown();
        result = {{"report", out.path.string()}};
      }
    } else if (*rl) {
      const auto c = resolve(common);
      json paths = json::array();
      for (const auto& cp : checkpoints_of(c, checkpoints, seed)) {
        expcli::fs::path written;
        expcli::run_rl(c, cp, &written, log);
        paths.push_back(written.string());
      }
      result = {{"reports", paths}};
    } else if (*emb) {
      const auto c = resolve(common);
      const auto data = expcli::load_or_generate_data(c);
      json paths = json::array();
      for (const auto& cp : checkpoints_of(c, checkpoints, seed)) {
        const auto report = expcli::export_embeddings(cp, data.source, c.dataset.seed);
        const auto path = expcli::reports_dir(c) / ("embedding_" + report.at("variant").get<std::string>() + "_seed" +
                                                   std::to_string(report.at("seed").get<std::uint64_t>()) + ".json");
        expcli::write_json(path, report);
        paths.push_back(path.string());
      }
      result = {{"reports", paths}};
    } else if (*plot) {
      json images = json::array();
      for (const auto& r : reports) {
        const expcli::fs::path p(r);
        const auto dir = common.out.empty() ? (p.has_parent_path() ? p.parent_path() : expcli::fs::path(".")) : expcli::fs::path(common.out);
        for (const auto& img : expcli::plot_reports({p}, dir)) images.push_back(img.string());
      }
      result = {{"images", images}};
    }
    std::cout << result.dump() << "\n";
    return 0;
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal_error", e.what());
  }
}
