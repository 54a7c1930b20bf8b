#pragma once

#include <cmath>
#include <optional>

#include "qv/conv.hpp"

namespace qv::nn {

enum class LayerKind { QConv, QTransposedConv, QDense, RealConv, RealTransposedConv, RealDense };

inline bool is_quaternion(LayerKind kind) {
  return kind == LayerKind::QConv || kind == LayerKind::QTransposedConv ||
         kind == LayerKind::QDense;
}

inline bool is_dense(LayerKind kind) {
  return kind == LayerKind::QDense || kind == LayerKind::RealDense;
}

inline bool is_transposed(LayerKind kind) {
  return kind == LayerKind::QTransposedConv || kind == LayerKind::RealTransposedConv;
}

/// Channel counts are in real units; quaternion kinds need both divisible
/// by 4 (one quaternion channel spans four consecutive real planes).
struct LayerSpec {
  LayerKind kind = LayerKind::QConv;
  std::int64_t in_channels = 4;
  std::int64_t out_channels = 4;
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
};

inline void validate(const LayerSpec& spec) {
  if (is_quaternion(spec.kind) && (spec.in_channels % 4 != 0 || spec.out_channels % 4 != 0)) {
    throw ChannelNotDivisibleBy4("quaternion layer channels must be multiples of 4");
  }
  if (spec.in_channels < 1 || spec.out_channels < 1 || spec.kernel < 1) {
    throw ShapeMismatch("layer spec: bad extents");
  }
}

inline std::int64_t weight_parameters(const LayerSpec& spec) {
  validate(spec);
  const std::int64_t k2 = is_dense(spec.kind) ? 1 : spec.kernel * spec.kernel;
  const std::int64_t full = spec.out_channels * spec.in_channels * k2;
  return is_quaternion(spec.kind) ? full / 4 : full;
}

/// Trainable scalars: weights plus one bias value per output unit (a full
/// quaternion per output channel for quaternion kinds).
inline std::int64_t count_parameters(const LayerSpec& spec) {
  return weight_parameters(spec) + spec.out_channels;
}

/// The four kernel components of a quaternion layer plus a quaternion bias
/// per output channel, stored as a length-C_out real tensor in split order.
template <typename S>
struct QuaternionLayerWeights {
  ad::Tensor<S> wa, wb, wc, wd;
  std::optional<ad::Tensor<S>> bias;
};

template <typename S>
struct RealLayerWeights {
  ad::Tensor<S> w;
  std::optional<ad::Tensor<S>> bias;
};

namespace detail {

template <typename S>
std::array<ad::Tensor<S>, 4> split4(const ad::Tensor<S>& x) {
  const std::int64_t c = x.shape()[1];
  if (c % 4 != 0) throw ChannelNotDivisibleBy4("quaternion input channels must be a multiple of 4");
  const std::int64_t q = c / 4;
  return {ad::slice_channels(x, 0, q), ad::slice_channels(x, q, 2 * q),
          ad::slice_channels(x, 2 * q, 3 * q), ad::slice_channels(x, 3 * q, 4 * q)};
}

/// Assembles the four output components of the Hamilton product
///   (Wa + Wb i + Wc j + Wd k) (qa + qb i + qc j + qd k)
/// from a primitive real linear map `apply(component_input, component_kernel)`.
template <typename S, typename Apply>
ad::Tensor<S> hamilton_combine(const std::array<ad::Tensor<S>, 4>& q,
                               const QuaternionLayerWeights<S>& w, const Apply& apply) {
  using ad::add;
  using ad::sub;
  auto out_a = sub(sub(sub(apply(q[0], w.wa), apply(q[1], w.wb)), apply(q[2], w.wc)),
                   apply(q[3], w.wd));
  auto out_b = sub(add(add(apply(q[1], w.wa), apply(q[0], w.wb)), apply(q[3], w.wc)),
                   apply(q[2], w.wd));
  auto out_c = add(add(sub(apply(q[2], w.wa), apply(q[3], w.wb)), apply(q[0], w.wc)),
                   apply(q[1], w.wd));
  auto out_d = add(sub(add(apply(q[3], w.wa), apply(q[2], w.wb)), apply(q[1], w.wc)),
                   apply(q[0], w.wd));
  auto out = ad::concat_channels<S>({out_a, out_b, out_c, out_d});
  if (w.bias) out = ad::add_channel_bias(out, *w.bias);
  return out;
}

}  // namespace detail

/// Quaternion convolution: sixteen real convolutions over the component
/// planes combined with the Hamilton sign pattern.
template <typename S>
ad::Tensor<S> qconv2d_forward(const ad::Tensor<S>& input, const QuaternionLayerWeights<S>& w,
                              std::int64_t stride, std::int64_t padding) {
  auto q = detail::split4(input);
  return detail::hamilton_combine(q, w, [&](const ad::Tensor<S>& x, const ad::Tensor<S>& k) {
    return ad::conv2d(x, k, nullptr, stride, padding);
  });
}

template <typename S>
ad::Tensor<S> qtransposed_conv2d_forward(const ad::Tensor<S>& input,
                                         const QuaternionLayerWeights<S>& w, std::int64_t stride,
                                         std::int64_t padding) {
  auto q = detail::split4(input);
  return detail::hamilton_combine(q, w, [&](const ad::Tensor<S>& x, const ad::Tensor<S>& k) {
    return ad::transposed_conv2d(x, k, nullptr, stride, padding);
  });
}

template <typename S>
ad::Tensor<S> qdense_forward(const ad::Tensor<S>& input, const QuaternionLayerWeights<S>& w) {
  auto q = detail::split4(input);
  return detail::hamilton_combine(q, w, [&](const ad::Tensor<S>& x, const ad::Tensor<S>& k) {
    return ad::dense(x, k, nullptr);
  });
}

/// Split activation: the real rule applied to every component plane, which in
/// split storage is exactly the elementwise real op.
template <typename S>
ad::Tensor<S> split_leaky_relu(const ad::Tensor<S>& input, S slope) {
  return ad::leaky_relu(input, slope);
}

inline double default_init_gain(double leaky_slope = 0.2) {
  return std::sqrt(2.0 / (1.0 + leaky_slope * leaky_slope));
}

/// Quaternion-aware initialization: per weight, a Rayleigh magnitude scaled
/// to a mean per-component variance of gain^2 / (fan_in + fan_out) with fans
/// in quaternion units, a uniform pure unit axis and a uniform angle in
/// (-pi, pi); the weight is assembled in polar form. Biases are zero.
template <typename S>
QuaternionLayerWeights<S> init_weights(const LayerSpec& spec, std::uint64_t seed,
                                       double gain = default_init_gain()) {
  validate(spec);
  if (!is_quaternion(spec.kind)) throw Error("init_weights: spec must be a quaternion kind");
  const std::int64_t q_in = spec.in_channels / 4, q_out = spec.out_channels / 4;
  const std::int64_t k2 = is_dense(spec.kind) ? 1 : spec.kernel * spec.kernel;
  const double fan_in = double(q_in * k2), fan_out = double(q_out * k2);
  // Rayleigh scale gain / sqrt(fan_in + fan_out): mean per-component variance
  // gain^2 / (2 (fan_in + fan_out)), which the 4-term Hamilton accumulation
  // and the split Leaky-ReLU turn into a variance-preserving block.
  const double rayleigh_scale = gain / std::sqrt(fan_in + fan_out);

  const std::int64_t count = q_out * q_in * k2;
  std::vector<S> wa(count), wb(count), wc(count), wd(count);
  RandomSource rng(seed);
  for (std::int64_t i = 0; i < count; ++i) {
    const double mag = rayleigh_scale * std::sqrt(-2.0 * std::log(1.0 - rng.uniform()));
    const double angle = (2.0 * rng.uniform() - 1.0) * 3.14159265358979323846;
    double ax, ay, az, n2;
    do {
      ax = rng.gaussian();
      ay = rng.gaussian();
      az = rng.gaussian();
      n2 = ax * ax + ay * ay + az * az;
    } while (n2 < 1e-12);
    const double inv = 1.0 / std::sqrt(n2);
    const double sin_m = mag * std::sin(angle);
    wa[i] = S(mag * std::cos(angle));
    wb[i] = S(sin_m * ax * inv);
    wc[i] = S(sin_m * ay * inv);
    wd[i] = S(sin_m * az * inv);
  }

  ad::Shape kernel_shape;
  if (is_dense(spec.kind)) {
    kernel_shape = {q_out, q_in};
  } else if (is_transposed(spec.kind)) {
    kernel_shape = {q_in, q_out, spec.kernel, spec.kernel};
  } else {
    kernel_shape = {q_out, q_in, spec.kernel, spec.kernel};
  }

  QuaternionLayerWeights<S> w{
      ad::Tensor<S>::param(kernel_shape, std::move(wa)),
      ad::Tensor<S>::param(kernel_shape, std::move(wb)),
      ad::Tensor<S>::param(kernel_shape, std::move(wc)),
      ad::Tensor<S>::param(kernel_shape, std::move(wd)),
      ad::Tensor<S>::param({spec.out_channels},
                           std::vector<S>(static_cast<std::size_t>(spec.out_channels), S(0)))};
  return w;
}

/// Plain Glorot-style normal initialization for the real baseline layers.
template <typename S>
RealLayerWeights<S> init_real_weights(const LayerSpec& spec, std::uint64_t seed,
                                      double gain = default_init_gain()) {
  validate(spec);
  if (is_quaternion(spec.kind)) throw Error("init_real_weights: spec must be a real kind");
  const std::int64_t k2 = is_dense(spec.kind) ? 1 : spec.kernel * spec.kernel;
  const double fan_in = double(spec.in_channels * k2), fan_out = double(spec.out_channels * k2);
  const double stddev = gain * std::sqrt(1.0 / (fan_in + fan_out));

  const std::int64_t count = spec.out_channels * spec.in_channels * k2;
  std::vector<S> w(count);
  RandomSource rng(seed);
  for (auto& v : w) v = S(stddev * rng.gaussian());

  ad::Shape kernel_shape;
  if (is_dense(spec.kind)) {
    kernel_shape = {spec.out_channels, spec.in_channels};
  } else if (is_transposed(spec.kind)) {
    kernel_shape = {spec.in_channels, spec.out_channels, spec.kernel, spec.kernel};
  } else {
    kernel_shape = {spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  }

  return RealLayerWeights<S>{
      ad::Tensor<S>::param(kernel_shape, std::move(w)),
      ad::Tensor<S>::param({spec.out_channels},
                           std::vector<S>(static_cast<std::size_t>(spec.out_channels), S(0)))};
}

}  // namespace qv::nn
