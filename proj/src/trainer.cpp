#include "qv/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

namespace qv::train {

namespace {

std::uint64_t mix_epoch_seed(std::uint64_t seed, std::int64_t epoch) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (std::uint64_t(epoch) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

Trainer::Trainer(std::unique_ptr<model::VaeModel<float>> model, const Dataset* dataset,
                 TrainOptions options)
    : model_(std::move(model)),
      dataset_(dataset),
      options_(std::move(options)),
      model_rng_(model_->config().seed ^ 0x6d9f43a1587be20cull) {
  if (!dataset_ || dataset_->items.empty()) throw EmptyDataset("trainer: empty dataset");
  optimizer_ = std::make_unique<Adam<float>>(model_->parameters(), options_.adam);
  optimizer_->set_lr(lr_for_epoch(0));
  open_log(/*truncate=*/true);
}

Trainer::Trainer(LoadedCheckpoint loaded, const Dataset* dataset, TrainOptions options)
    : model_(std::move(loaded.model)),
      optimizer_(std::move(loaded.optimizer)),
      dataset_(dataset),
      options_(std::move(options)),
      model_rng_(0) {
  if (!dataset_ || dataset_->items.empty()) throw EmptyDataset("trainer: empty dataset");
  model_rng_.restore(loaded.state.model_rng);
  epoch_ = loaded.state.epoch;
  step_in_epoch_ = loaded.state.step_in_epoch;
  optimizer_->set_lr(lr_for_epoch(epoch_));
  open_log(/*truncate=*/false);
}

Trainer Trainer::resume(const std::string& checkpoint_path, const Dataset* dataset,
                        TrainOptions options) {
  return Trainer(load_checkpoint(checkpoint_path), dataset, std::move(options));
}

void Trainer::open_log(bool truncate) {
  if (options_.out_dir.empty()) return;
  std::filesystem::create_directories(options_.out_dir);
  const std::string path = options_.out_dir + "/metrics.csv";
  const bool fresh = truncate || !std::filesystem::exists(path);
  log_.open(path, fresh ? std::ios::trunc : std::ios::app);
  if (!log_) throw Error("cannot open " + path);
  if (fresh) log_ << "epoch,step,loss,bce,kl,lr\n";
}

double Trainer::lr_for_epoch(std::int64_t epoch) const {
  std::int64_t halvings = 0;
  if (options_.lr_milestones.empty()) {
    halvings = epoch / 10;
  } else {
    for (auto m : options_.lr_milestones) {
      if (m <= epoch) ++halvings;
    }
  }
  double lr = options_.base_lr;
  for (std::int64_t i = 0; i < halvings; ++i) lr *= 0.5;
  return lr;
}

std::int64_t Trainer::batches_per_epoch() const {
  const auto n = static_cast<std::int64_t>(dataset_->items.size());
  return (n + options_.batch_size - 1) / options_.batch_size;
}

std::vector<std::int64_t> Trainer::epoch_order(std::int64_t epoch) const {
  std::vector<std::int64_t> order(dataset_->items.size());
  std::iota(order.begin(), order.end(), 0);
  RandomSource rng(mix_epoch_seed(model_->config().seed, epoch));
  shuffle(order, rng);
  return order;
}

ad::Tensor<float> Trainer::batch_tensor(const std::vector<std::int64_t>& indices) const {
  std::vector<const float*> images;
  images.reserve(indices.size());
  for (auto i : indices) images.push_back(dataset_->items[i].pixels.data());
  return model::ImageBatch<float>::from_rgb(images, dataset_->target_size).pixels;
}

void Trainer::one_batch() {
  const auto order = epoch_order(epoch_);
  const std::int64_t n = static_cast<std::int64_t>(order.size());
  const std::int64_t begin = step_in_epoch_ * options_.batch_size;
  const std::int64_t end = std::min(begin + options_.batch_size, n);
  const std::vector<std::int64_t> indices(order.begin() + begin, order.begin() + end);

  optimizer_->set_lr(lr_for_epoch(epoch_));
  auto pixels = batch_tensor(indices);
  model_->zero_grad();
  auto parts = model_->training_loss(pixels, model_rng_);
  if (!std::isfinite(parts.bce) || !std::isfinite(parts.kl)) {
    throw DivergenceError("training loss is not finite");
  }
  ad::backward(parts.total);
  optimizer_->step();

  const double lambda = model_->config().lambda_kl;
  const double loss = parts.bce + lambda * parts.kl;
  if (log_.is_open()) {
    char line[160];
    std::snprintf(line, sizeof(line), "%lld,%lld,%.12g,%.12g,%.12g,%.12g\n",
                  static_cast<long long>(epoch_ + 1),
                  static_cast<long long>(optimizer_->step_count()), loss, parts.bce, parts.kl,
                  optimizer_->lr());
    log_ << line;
    log_.flush();
  }
  epoch_loss_ += loss;
  epoch_bce_ += parts.bce;
  epoch_kl_ += parts.kl;

  ++step_in_epoch_;
  if (step_in_epoch_ >= batches_per_epoch()) {
    const double batches = double(batches_per_epoch());
    records_.push_back(
        {epoch_ + 1, epoch_loss_ / batches, epoch_bce_ / batches, epoch_kl_ / batches});
    epoch_loss_ = epoch_bce_ = epoch_kl_ = 0.0;
    ++epoch_;
    step_in_epoch_ = 0;
    if (!options_.out_dir.empty()) {
      char name[48];
      std::snprintf(name, sizeof(name), "/epoch_%04lld.qvae", static_cast<long long>(epoch_));
      save(options_.out_dir + name);
    }
  }
}

void Trainer::run_epochs(std::int64_t target_epochs) {
  while (epoch_ < target_epochs) one_batch();
}

void Trainer::run_batches(std::int64_t count) {
  for (std::int64_t i = 0; i < count; ++i) one_batch();
}

void Trainer::save(const std::string& path) {
  TrainerState state;
  state.epoch = epoch_;
  state.step_in_epoch = step_in_epoch_;
  state.lr = optimizer_->lr();
  state.model_rng = model_rng_.serialize();
  save_checkpoint(path, *model_, *optimizer_, state);
}

}  // namespace qv::train
