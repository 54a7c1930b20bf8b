#pragma once

#include <memory>
#include <string>

#include "qv/layers.hpp"
#include "qv/stats.hpp"

namespace qv::model {

/// How the real baseline sizes its latent space relative to the quaternion
/// model's latent_dim quaternion dimensions.
enum class BaselineLatentPolicy {
  EqualRealDims,  ///< 4 * latent_dim real dimensions (identical tensor shapes)
  EqualCount,     ///< latent_dim real dimensions
};

struct QvaeConfig {
  std::vector<std::int64_t> encoder_channels{32, 64, 128, 256, 512};
  std::int64_t latent_dim = 100;  // quaternion dimensions
  double lambda_kl = 1e-5;
  double leaky_slope = 0.2;
  stats::KlVariant kl_variant = stats::KlVariant::PaperExact;
  std::int64_t mc_samples = 1;  // L in the expectation term
  std::int64_t input_size = 64;
  std::uint64_t seed = 0;
  BaselineLatentPolicy baseline_latent = BaselineLatentPolicy::EqualRealDims;

  std::int64_t blocks() const { return static_cast<std::int64_t>(encoder_channels.size()); }

  /// Spatial extent of the bottleneck grid after all stride-2 blocks.
  std::int64_t bottleneck_size() const {
    std::int64_t s = input_size;
    for (std::int64_t b = 0; b < blocks(); ++b) {
      if (s % 2 != 0) throw InvalidGeometry("input_size must halve through every encoder block");
      s /= 2;
    }
    return s;
  }

  std::int64_t baseline_real_latent() const {
    return baseline_latent == BaselineLatentPolicy::EqualRealDims ? 4 * latent_dim : latent_dim;
  }

  void validate_quaternion() const {
    if (latent_dim < 1) throw Error("config: latent_dim must be >= 1");
    if (lambda_kl < 0) throw Error("config: lambda_kl must be >= 0");
    if (mc_samples < 1) throw Error("config: mc_samples must be >= 1");
    if (encoder_channels.empty()) throw Error("config: empty channel plan");
    for (auto c : encoder_channels) {
      if (c % 4 != 0) throw ChannelNotDivisibleBy4("config: channels must be multiples of 4");
    }
    bottleneck_size();
  }
};

/// Layer shapes of an encoder/decoder pair, in parameter declaration order:
/// encoder convolutions, mean head, log-variance head, decoder projection,
/// decoder transposed convolutions, final convolution to the 4 planes.
inline std::vector<nn::LayerSpec> architecture_plan(const QvaeConfig& config, bool quaternion) {
  using nn::LayerKind;
  config.validate_quaternion();
  const auto& ch = config.encoder_channels;
  const std::int64_t blocks = config.blocks();
  const std::int64_t grid = config.bottleneck_size();
  const std::int64_t flat = ch.back() * grid * grid;
  const std::int64_t latent_real =
      quaternion ? 4 * config.latent_dim : config.baseline_real_latent();

  const LayerKind conv = quaternion ? LayerKind::QConv : LayerKind::RealConv;
  const LayerKind tconv = quaternion ? LayerKind::QTransposedConv : LayerKind::RealTransposedConv;
  const LayerKind fc = quaternion ? LayerKind::QDense : LayerKind::RealDense;

  std::vector<nn::LayerSpec> plan;
  for (std::int64_t b = 0; b < blocks; ++b) {
    plan.push_back({conv, b == 0 ? 4 : ch[b - 1], ch[b], 4, 2, 1});
  }
  plan.push_back({fc, flat, latent_real, 1, 1, 0});  // mean head
  plan.push_back({fc, flat, latent_real, 1, 1, 0});  // log-variance head
  plan.push_back({fc, latent_real, flat, 1, 1, 0});  // decoder projection
  for (std::int64_t b = blocks - 1; b >= 0; --b) {
    plan.push_back({tconv, ch[b], b > 0 ? ch[b - 1] : ch[0], 4, 2, 1});
  }
  plan.push_back({conv, ch[0], 4, 3, 1, 1});  // projection to the 4 planes
  return plan;
}

inline std::int64_t plan_parameter_count(const std::vector<nn::LayerSpec>& plan) {
  std::int64_t total = 0;
  for (const auto& spec : plan) total += nn::count_parameters(spec);
  return total;
}

inline std::int64_t plan_weight_count(const std::vector<nn::LayerSpec>& plan) {
  std::int64_t total = 0;
  for (const auto& spec : plan) total += nn::weight_parameters(spec);
  return total;
}

/// Image batch in split quaternion layout: plane 0 (the real part) is zero,
/// planes 1..3 carry R, G, B in [0, 1].
template <typename S>
struct ImageBatch {
  ad::Tensor<S> pixels;  // [N, 4, H, W]

  /// `images` are RGB plane-major buffers (3 * size * size floats each).
  static ImageBatch from_rgb(const std::vector<const float*>& images, std::int64_t size) {
    const std::int64_t n = static_cast<std::int64_t>(images.size());
    const std::int64_t hw = size * size;
    std::vector<S> data(static_cast<std::size_t>(n * 4 * hw), S(0));
    for (std::int64_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) {
        const float* src = images[i] + c * hw;
        S* dst = data.data() + (i * 4 + (c + 1)) * hw;
        for (std::int64_t p = 0; p < hw; ++p) dst[p] = S(src[p]);
      }
    }
    return ImageBatch{ad::Tensor<S>({n, 4, size, size}, std::move(data))};
  }
};

template <typename S>
struct LatentDistribution {
  ad::Tensor<S> mu;       // [N, 4 * latent] for the quaternion model
  ad::Tensor<S> log_var;  // [N, latent] (one shared value per quaternion dim)
};

template <typename S>
struct StepLoss {
  ad::Tensor<S> total;
  double bce = 0.0;
  double kl = 0.0;
};

/// Common surface of the quaternion model and the real baseline.
template <typename S>
class VaeModel {
 public:
  virtual ~VaeModel() = default;

  virtual const QvaeConfig& config() const = 0;
  virtual bool quaternion() const = 0;

  /// Trainable tensors in declared (checkpoint) order.
  virtual std::vector<ad::Tensor<S>*> parameters() = 0;

  virtual LatentDistribution<S> encode(const ad::Tensor<S>& pixels) = 0;
  virtual ad::Tensor<S> reparameterize(const LatentDistribution<S>& dist, RandomSource& rng) = 0;
  virtual ad::Tensor<S> decode(const ad::Tensor<S>& z) = 0;

  /// BCE over the image planes plus lambda-weighted KL; the expectation term
  /// averages mc_samples reparameterized draws.
  virtual StepLoss<S> training_loss(const ad::Tensor<S>& pixels, RandomSource& rng) = 0;

  /// Decode of the posterior mean (deterministic reconstruction).
  virtual ad::Tensor<S> reconstruct(const ad::Tensor<S>& pixels) = 0;

  /// Decode of prior draws.
  virtual ad::Tensor<S> generate(std::int64_t count, RandomSource& rng) = 0;

  std::int64_t parameter_count() {
    std::int64_t total = 0;
    for (const auto* p : parameters()) total += p->size();
    return total;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }
};

namespace detail {

/// Zeroes the real plane in-graph so the loss cannot see it.
template <typename S>
ad::Tensor<S> drop_real_plane(const ad::Tensor<S>& pixels) {
  const auto& shape = pixels.shape();
  if (shape.size() != 4 || shape[1] != 4) throw ShapeMismatch("image batch must be [N, 4, H, W]");
  auto zero = ad::Tensor<S>::zeros({shape[0], 1, shape[2], shape[3]});
  return ad::concat_channels<S>({zero, ad::slice_channels(pixels, 1, 4)});
}

template <typename S>
ad::Tensor<S> gaussian_tensor(ad::Shape shape, RandomSource& rng) {
  std::vector<S> values(static_cast<std::size_t>(ad::numel(shape)));
  for (auto& v : values) v = S(rng.gaussian());
  return ad::Tensor<S>(std::move(shape), std::move(values));
}

}  // namespace detail

template <typename S>
class QuaternionVae final : public VaeModel<S> {
 public:
  explicit QuaternionVae(const QvaeConfig& config) : config_(config) {
    config_.validate_quaternion();
    plan_ = architecture_plan(config_, true);
    RandomSource seeder(config_.seed ^ 0x71a3f0e5c2d94b61ull);
    for (const auto& spec : plan_) layers_.push_back(nn::init_weights<S>(spec, seeder.raw()));
  }

  const QvaeConfig& config() const override { return config_; }
  bool quaternion() const override { return true; }

  std::vector<ad::Tensor<S>*> parameters() override {
    std::vector<ad::Tensor<S>*> out;
    for (auto& layer : layers_) {
      out.push_back(&layer.wa);
      out.push_back(&layer.wb);
      out.push_back(&layer.wc);
      out.push_back(&layer.wd);
      if (layer.bias) out.push_back(&*layer.bias);
    }
    return out;
  }

  LatentDistribution<S> encode(const ad::Tensor<S>& pixels) override {
    const std::int64_t blocks = config_.blocks();
    auto h = detail::drop_real_plane(pixels);
    for (std::int64_t b = 0; b < blocks; ++b) {
      h = nn::split_leaky_relu(nn::qconv2d_forward(h, layers_[b], plan_[b].stride, plan_[b].padding),
                               S(config_.leaky_slope));
    }
    const std::int64_t n = h.shape()[0];
    h = ad::reshape(h, {n, h.shape()[1] * h.shape()[2] * h.shape()[3]});
    auto mu = nn::qdense_forward(h, layers_[blocks]);
    auto lv_full = nn::qdense_forward(h, layers_[blocks + 1]);
    // The real component of the quaternion head output is the log-variance.
    auto log_var = ad::clamp(ad::slice_channels(lv_full, 0, config_.latent_dim), S(-30), S(20));
    return {std::move(mu), std::move(log_var)};
  }

  ad::Tensor<S> reparameterize(const LatentDistribution<S>& dist, RandomSource& rng) override {
    auto eps = detail::gaussian_tensor<S>(dist.mu.shape(), rng);
    auto sigma = ad::tile4(ad::exp(ad::scale(dist.log_var, S(0.5))));
    return ad::add(dist.mu, ad::mul(sigma, eps));
  }

  ad::Tensor<S> decode(const ad::Tensor<S>& z) override {
    const std::int64_t blocks = config_.blocks();
    const std::int64_t grid = config_.bottleneck_size();
    auto h = nn::split_leaky_relu(nn::qdense_forward(z, layers_[blocks + 2]),
                                  S(config_.leaky_slope));
    h = ad::reshape(h, {z.shape()[0], config_.encoder_channels.back(), grid, grid});
    for (std::int64_t b = 0; b < blocks; ++b) {
      const auto& spec = plan_[blocks + 3 + b];
      h = nn::split_leaky_relu(
          nn::qtransposed_conv2d_forward(h, layers_[blocks + 3 + b], spec.stride, spec.padding),
          S(config_.leaky_slope));
    }
    const auto& final_spec = plan_.back();
    auto y = nn::qconv2d_forward(h, layers_.back(), final_spec.stride, final_spec.padding);
    auto real = ad::slice_channels(y, 0, 1);
    auto image = ad::sigmoid(ad::slice_channels(y, 1, 4));
    return ad::concat_channels<S>({real, image});
  }

  /// Batch-mean KL against the standard proper Gaussian prior, on the tape.
  ad::Tensor<S> kl_term(const LatentDistribution<S>& dist) {
    const S batch = S(dist.log_var.shape()[0]);
    const S n_latent = S(config_.latent_dim);
    auto var_sum = ad::sum_all(ad::exp(dist.log_var));
    auto mu_sq = ad::sum_all(ad::mul(dist.mu, dist.mu));
    auto log_sum = ad::sum_all(dist.log_var);
    if (config_.kl_variant == stats::KlVariant::PaperExact) {
      auto kl = ad::add(ad::scale(var_sum, S(0.5) / batch), ad::scale(mu_sq, S(0.5) / batch));
      kl = ad::add(kl, ad::scale(log_sum, S(-2) / batch));
      return ad::add_scalar(kl, S(-0.5) * n_latent);
    }
    auto kl = ad::add(ad::scale(var_sum, S(2) / batch), ad::scale(mu_sq, S(0.5) / batch));
    kl = ad::add(kl, ad::scale(log_sum, S(-2) / batch));
    return ad::add_scalar(kl, S(-2) * n_latent);
  }

  StepLoss<S> training_loss(const ad::Tensor<S>& pixels, RandomSource& rng) override {
    auto dist = encode(pixels);
    auto target = ad::slice_channels(pixels, 1, 4);
    ad::Tensor<S> bce;
    for (std::int64_t l = 0; l < config_.mc_samples; ++l) {
      auto z = reparameterize(dist, rng);
      auto recon = decode(z);
      auto term = ad::bce_loss(ad::slice_channels(recon, 1, 4), target);
      bce = (l == 0) ? term : ad::add(bce, term);
    }
    if (config_.mc_samples > 1) bce = ad::scale(bce, S(1) / S(config_.mc_samples));
    auto kl = kl_term(dist);
    StepLoss<S> parts{ad::add(bce, ad::scale(kl, S(config_.lambda_kl))), double(bce.item()),
                      double(kl.item())};
    return parts;
  }

  ad::Tensor<S> reconstruct(const ad::Tensor<S>& pixels) override {
    return decode(encode(pixels).mu);
  }

  ad::Tensor<S> generate(std::int64_t count, RandomSource& rng) override {
    return decode(detail::gaussian_tensor<S>({count, 4 * config_.latent_dim}, rng));
  }

  const std::vector<nn::QuaternionLayerWeights<S>>& layers() const { return layers_; }
  const std::vector<nn::LayerSpec>& plan() const { return plan_; }

 private:
  QvaeConfig config_;
  std::vector<nn::LayerSpec> plan_;
  std::vector<nn::QuaternionLayerWeights<S>> layers_;
};

template <typename S>
class RealVae final : public VaeModel<S> {
 public:
  explicit RealVae(const QvaeConfig& config) : config_(config) {
    config_.validate_quaternion();
    plan_ = architecture_plan(config_, false);
    RandomSource seeder(config_.seed ^ 0x2e8c5a17d93fb604ull);
    for (const auto& spec : plan_) layers_.push_back(nn::init_real_weights<S>(spec, seeder.raw()));
  }

  const QvaeConfig& config() const override { return config_; }
  bool quaternion() const override { return false; }

  std::vector<ad::Tensor<S>*> parameters() override {
    std::vector<ad::Tensor<S>*> out;
    for (auto& layer : layers_) {
      out.push_back(&layer.w);
      if (layer.bias) out.push_back(&*layer.bias);
    }
    return out;
  }

  LatentDistribution<S> encode(const ad::Tensor<S>& pixels) override {
    const std::int64_t blocks = config_.blocks();
    auto h = detail::drop_real_plane(pixels);
    for (std::int64_t b = 0; b < blocks; ++b) {
      h = ad::leaky_relu(
          ad::conv2d(h, layers_[b].w, layers_[b].bias ? &*layers_[b].bias : nullptr,
                     plan_[b].stride, plan_[b].padding),
          S(config_.leaky_slope));
    }
    const std::int64_t n = h.shape()[0];
    h = ad::reshape(h, {n, h.shape()[1] * h.shape()[2] * h.shape()[3]});
    auto mu = ad::dense(h, layers_[blocks].w, layers_[blocks].bias ? &*layers_[blocks].bias : nullptr);
    auto lv = ad::dense(h, layers_[blocks + 1].w,
                        layers_[blocks + 1].bias ? &*layers_[blocks + 1].bias : nullptr);
    return {std::move(mu), ad::clamp(lv, S(-30), S(20))};
  }

  ad::Tensor<S> reparameterize(const LatentDistribution<S>& dist, RandomSource& rng) override {
    auto eps = detail::gaussian_tensor<S>(dist.mu.shape(), rng);
    auto sigma = ad::exp(ad::scale(dist.log_var, S(0.5)));
    return ad::add(dist.mu, ad::mul(sigma, eps));
  }

  ad::Tensor<S> decode(const ad::Tensor<S>& z) override {
    const std::int64_t blocks = config_.blocks();
    const std::int64_t grid = config_.bottleneck_size();
    auto& proj = layers_[blocks + 2];
    auto h = ad::leaky_relu(ad::dense(z, proj.w, proj.bias ? &*proj.bias : nullptr),
                            S(config_.leaky_slope));
    h = ad::reshape(h, {z.shape()[0], config_.encoder_channels.back(), grid, grid});
    for (std::int64_t b = 0; b < blocks; ++b) {
      auto& layer = layers_[blocks + 3 + b];
      const auto& spec = plan_[blocks + 3 + b];
      h = ad::leaky_relu(ad::transposed_conv2d(h, layer.w, layer.bias ? &*layer.bias : nullptr,
                                               spec.stride, spec.padding),
                         S(config_.leaky_slope));
    }
    const auto& final_spec = plan_.back();
    auto y = ad::conv2d(h, layers_.back().w, layers_.back().bias ? &*layers_.back().bias : nullptr,
                        final_spec.stride, final_spec.padding);
    auto real = ad::slice_channels(y, 0, 1);
    auto image = ad::sigmoid(ad::slice_channels(y, 1, 4));
    return ad::concat_channels<S>({real, image});
  }

  /// Standard diagonal-Gaussian KL over the real latent dimensions.
  ad::Tensor<S> kl_term(const LatentDistribution<S>& dist) {
    const S batch = S(dist.log_var.shape()[0]);
    const S dims = S(dist.log_var.shape()[1]);
    auto var_sum = ad::sum_all(ad::exp(dist.log_var));
    auto mu_sq = ad::sum_all(ad::mul(dist.mu, dist.mu));
    auto log_sum = ad::sum_all(dist.log_var);
    auto kl = ad::add(ad::scale(var_sum, S(0.5) / batch), ad::scale(mu_sq, S(0.5) / batch));
    kl = ad::add(kl, ad::scale(log_sum, S(-0.5) / batch));
    return ad::add_scalar(kl, S(-0.5) * dims);
  }

  StepLoss<S> training_loss(const ad::Tensor<S>& pixels, RandomSource& rng) override {
    auto dist = encode(pixels);
    auto target = ad::slice_channels(pixels, 1, 4);
    ad::Tensor<S> bce;
    for (std::int64_t l = 0; l < config_.mc_samples; ++l) {
      auto z = reparameterize(dist, rng);
      auto recon = decode(z);
      auto term = ad::bce_loss(ad::slice_channels(recon, 1, 4), target);
      bce = (l == 0) ? term : ad::add(bce, term);
    }
    if (config_.mc_samples > 1) bce = ad::scale(bce, S(1) / S(config_.mc_samples));
    auto kl = kl_term(dist);
    StepLoss<S> parts{ad::add(bce, ad::scale(kl, S(config_.lambda_kl))), double(bce.item()),
                      double(kl.item())};
    return parts;
  }

  ad::Tensor<S> reconstruct(const ad::Tensor<S>& pixels) override {
    return decode(encode(pixels).mu);
  }

  ad::Tensor<S> generate(std::int64_t count, RandomSource& rng) override {
    return decode(detail::gaussian_tensor<S>({count, config_.baseline_real_latent()}, rng));
  }

  const std::vector<nn::RealLayerWeights<S>>& layers() const { return layers_; }

 private:
  QvaeConfig config_;
  std::vector<nn::LayerSpec> plan_;
  std::vector<nn::RealLayerWeights<S>> layers_;
};

template <typename S>
std::unique_ptr<VaeModel<S>> build_model(const QvaeConfig& config, bool quaternion) {
  if (quaternion) return std::make_unique<QuaternionVae<S>>(config);
  return std::make_unique<RealVae<S>>(config);
}

/// Same channel plan, real layers, standard real KL.
template <typename S>
std::unique_ptr<VaeModel<S>> build_baseline_vae(const QvaeConfig& config) {
  return build_model<S>(config, false);
}

/// Extracts latent row `row` of a [N, 4L] split-layout tensor buffer as a
/// length-L quaternion vector.
template <typename S>
QuaternionArray latent_row_to_quaternions(const std::vector<S>& data, std::int64_t row,
                                          std::int64_t latent) {
  QuaternionArray out({latent});
  const S* base = data.data() + row * 4 * latent;
  for (std::int64_t i = 0; i < latent; ++i) {
    out.set(i, Quaternion{double(base[i]), double(base[latent + i]), double(base[2 * latent + i]),
                          double(base[3 * latent + i])});
  }
  return out;
}

}  // namespace qv::model
