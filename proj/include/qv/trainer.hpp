#pragma once

#include <fstream>

#include "qv/checkpoint.hpp"
#include "qv/dataset.hpp"

namespace qv::train {

struct TrainOptions {
  std::int64_t epochs = 10;
  std::int64_t batch_size = 64;
  double base_lr = 5e-4;
  /// Epochs at which the rate halves; empty means every 10 epochs.
  std::vector<std::int64_t> lr_milestones;
  AdamConfig adam;
  std::string out_dir;  // checkpoints + metrics.csv; empty writes nothing
};

struct EpochRecord {
  std::int64_t epoch = 0;  // 1-based
  double loss = 0.0;
  double bce = 0.0;
  double kl = 0.0;
};

/// Owns the model, optimizer and loop state. Batch order is derived from
/// (config seed, epoch index) alone, so resuming mid-epoch replays the exact
/// uninterrupted sequence.
class Trainer {
 public:
  Trainer(std::unique_ptr<model::VaeModel<float>> model, const Dataset* dataset,
          TrainOptions options);

  static Trainer resume(const std::string& checkpoint_path, const Dataset* dataset,
                        TrainOptions options);

  /// Runs until `target_epochs` epochs are complete (counted from scratch).
  void run_epochs(std::int64_t target_epochs);
  void run_batches(std::int64_t count);

  void save(const std::string& path);

  model::VaeModel<float>& model() { return *model_; }
  Adam<float>& optimizer() { return *optimizer_; }
  RandomSource& model_rng() { return model_rng_; }
  const std::vector<EpochRecord>& records() const { return records_; }
  std::int64_t epoch() const { return epoch_; }
  std::int64_t batches_per_epoch() const;

  double lr_for_epoch(std::int64_t epoch) const;

  /// Pixel tensor for a list of dataset item indices.
  ad::Tensor<float> batch_tensor(const std::vector<std::int64_t>& indices) const;

 private:
  Trainer(LoadedCheckpoint loaded, const Dataset* dataset, TrainOptions options);

  void one_batch();
  std::vector<std::int64_t> epoch_order(std::int64_t epoch) const;
  void open_log(bool truncate);

  std::unique_ptr<model::VaeModel<float>> model_;
  std::unique_ptr<Adam<float>> optimizer_;
  const Dataset* dataset_;
  TrainOptions options_;
  RandomSource model_rng_;

  std::int64_t epoch_ = 0;
  std::int64_t step_in_epoch_ = 0;
  double epoch_loss_ = 0.0, epoch_bce_ = 0.0, epoch_kl_ = 0.0;
  std::vector<EpochRecord> records_;
  std::ofstream log_;
};

}  // namespace qv::train
