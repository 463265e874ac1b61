#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "duskill/datakit/norm.hpp"
#include "duskill/datakit/segment.hpp"
#include "duskill/skillnet/model.hpp"

namespace duskill::skillnet {

struct TrainConfig {
  long steps = 100000;
  int batch_size = 128;
  double lr = 1e-3;
  double bc_lr = 1e-4;  // behavior cloning baseline
  int log_interval = 100;
  std::string lr_schedule = "constant";  // or "cosine": decays to zero over `steps`
  std::uint64_t seed = 0;
  double divergence_factor = 10.0;
  int divergence_patience = 100;

  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Trained model with everything needed to use it: never modified after
/// training or loading, so it is shared by const pointer.
struct ModelBundle {
  SkillModel<float> model;
  datakit::NormStats norm;
  long step_count = 0;
  TrainConfig train;

  const ModelConfig& config() const { return model.config(); }
};

using BundlePtr = std::shared_ptr<const ModelBundle>;

struct LogEntry {
  long step = 0;  // 1-based count of completed updates
  LossReport report;
};

struct TrainResult {
  BundlePtr bundle;
  std::vector<LogEntry> log;
};

/// Assembles a batch from normalized segments.
Batch<float> make_batch(const datakit::SegmentSet& segments, const std::vector<int>& indices);

/// Per-network Adam optimizers grouped as encoders, priors, decoders.
class Optimizers {
 public:
  Optimizers(const SkillModel<float>& model, const TrainConfig& config);
  /// Applies the encoder update, then the prior update, then the decoder update.
  void apply(SkillModel<float>& model, const Grads<float>& grads);
  /// Sets every learning rate to `factor` times its configured value.
  void scale_lr(double factor);

 private:
  std::map<std::string, nn::Adam<float>> adam_;
  std::map<std::string, double> base_lr_;
};

/// Learning-rate multiplier of `schedule` before update `step` (1-based).
double lr_factor(const std::string& schedule, long step, long steps);

/// Offline skill pretraining. `segments` must already be normalized with
/// `norm`. Every `log_interval` updates a LossReport is appended to the
/// log (and passed to `on_log` if set).
TrainResult train_offline(const datakit::SegmentSet& segments, const datakit::NormStats& norm,
                          const ModelConfig& model_config, const TrainConfig& config,
                          const std::function<void(const LogEntry&)>& on_log = {});

/// Normalizes the states and actions of a segment set in place.
datakit::SegmentSet normalize_segments(const datakit::SegmentSet& segments, const datakit::NormStats& norm);

}  // namespace duskill::skillnet
