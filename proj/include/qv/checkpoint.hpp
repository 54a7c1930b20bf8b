#pragma once

#include <memory>
#include <string>

#include "qv/adam.hpp"
#include "qv/qvae.hpp"

namespace qv::train {

/// Loop position and RNG stream captured alongside weights so a resumed run
/// is bitwise identical to an uninterrupted one.
struct TrainerState {
  std::int64_t epoch = 0;          // completed epochs
  std::int64_t step_in_epoch = 0;  // batches consumed inside the current epoch
  double lr = 5e-4;
  std::string model_rng;
};

/// Binary format: magic "QVAE", u32 version, u64 metadata length, UTF-8
/// key=value metadata, then raw float32 buffers: parameters in declared layer
/// order, Adam first moments, Adam second moments. Little endian throughout.
void save_checkpoint(const std::string& path, model::VaeModel<float>& model,
                     Adam<float>& optimizer, const TrainerState& state);

struct LoadedCheckpoint {
  std::unique_ptr<model::VaeModel<float>> model;
  std::unique_ptr<Adam<float>> optimizer;
  TrainerState state;
};

/// Throws CheckpointError on bad magic, version, or truncated payload.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace qv::train
