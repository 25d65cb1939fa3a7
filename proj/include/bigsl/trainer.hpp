#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bigsl/config.hpp"
#include "bigsl/model.hpp"
#include "bigsl/params.hpp"

namespace bigsl {

/// Everything needed to rebuild a model and continue training exactly where it stopped.
struct Checkpoint {
  RunConfig config;
  int epoch = 0;  // completed epochs
  std::size_t num_users = 0;
  std::vector<FeatureView> views;
  ParameterStore params;
  std::vector<PrototypeSet> prototypes;
  long long adam_steps = 0;
  std::vector<Matrix> adam_m;
  std::vector<Matrix> adam_v;
};

std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint(const std::string& bytes);
/// Atomic write: the file either keeps its old contents or holds the complete new checkpoint.
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);
/// Model with the checkpoint's parameters and prototypes.
Model model_from_checkpoint(const Checkpoint& c);

struct EpochRecord {
  int epoch = 0;  // 1-based
  std::size_t batches = 0;
  std::size_t samples = 0;
  LossBreakdown mean;  // per-batch means
  double grad_norm = 0.0;  // mean pre-clip norm
  double seconds = 0.0;
};

/// One JSON object per line for the epoch log.
std::string epoch_log_line(const EpochRecord& r, const std::string& extra_json = "");

class Trainer {
 public:
  Trainer(const RunConfig& config, const Dataset& dataset, std::vector<FeatureView> views);
  /// Continues from a checkpoint; later epochs match an uninterrupted run bit for bit.
  Trainer(const Checkpoint& checkpoint, const Dataset& dataset);

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const Adam& optimizer() const { return adam_; }
  const RunConfig& config() const { return config_; }
  int epoch() const { return epoch_; }
  std::size_t num_samples() const { return samples_.size(); }

  /// Runs one epoch. Throws NonFiniteLoss with the batch index on a NaN/inf loss.
  EpochRecord run_epoch();
  /// Runs until `epochs` are complete, calling `on_epoch` after each one.
  void train(const std::function<void(const EpochRecord&)>& on_epoch = {});
  Checkpoint checkpoint() const;

 private:
  RunConfig config_;
  const Dataset* dataset_;
  Model model_;
  Adam adam_;
  int epoch_ = 0;
  std::vector<Sample> samples_;
};

/// Seeded views for a dataset as selected by the config.
std::vector<FeatureView> build_views(const Dataset& dataset, const TrainingConfig& config, std::size_t slots);

}  // namespace bigsl
