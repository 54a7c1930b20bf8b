#pragma once

#include <cmath>
#include <initializer_list>

#include "qv/tensor.hpp"

namespace qv::ad {

namespace detail {

/// dst += src in index order.
template <typename S>
void accumulate(std::vector<S>& dst, const std::vector<S>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename S>
void check_same_shape(const Tensor<S>& x, const Tensor<S>& y, const char* op) {
  if (x.shape() != y.shape()) throw ShapeMismatch(std::string(op) + ": shape mismatch");
}

template <typename S>
std::vector<std::shared_ptr<Node<S>>> live_parents(std::initializer_list<const Tensor<S>*> inputs) {
  std::vector<std::shared_ptr<Node<S>>> parents;
  for (const Tensor<S>* t : inputs) {
    if (t->node()) parents.push_back(t->node());
  }
  return parents;
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& x, const Tensor<S>& y) {
  detail::check_same_shape(x, y, "add");
  std::vector<S> out(x.data());
  detail::accumulate(out, y.data());
  Tensor<S> result(x.shape(), std::move(out));
  if (x.node() || y.node()) {
    auto xn = x.node(), yn = y.node();
    result.set_node(make_node<S>("add", detail::live_parents<S>({&x, &y}), result.size(),
                                 [xn, yn](const std::vector<S>& g) {
                                   if (xn) detail::accumulate(xn->grad, g);
                                   if (yn) detail::accumulate(yn->grad, g);
                                 }));
  }
  return result;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& x, const Tensor<S>& y) {
  detail::check_same_shape(x, y, "sub");
  std::vector<S> out(x.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y.data()[i];
  Tensor<S> result(x.shape(), std::move(out));
  if (x.node() || y.node()) {
    auto xn = x.node(), yn = y.node();
    result.set_node(make_node<S>("sub", detail::live_parents<S>({&x, &y}), result.size(),
                                 [xn, yn](const std::vector<S>& g) {
                                   if (xn) detail::accumulate(xn->grad, g);
                                   if (yn)
                                     for (std::size_t i = 0; i < g.size(); ++i) yn->grad[i] -= g[i];
                                 }));
  }
  return result;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& x, const Tensor<S>& y) {
  detail::check_same_shape(x, y, "mul");
  std::vector<S> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * y.data()[i];
  Tensor<S> result(x.shape(), std::move(out));
  if (x.node() || y.node()) {
    auto xn = x.node(), yn = y.node();
    auto xd = x.data_handle(), yd = y.data_handle();
    result.set_node(make_node<S>("mul", detail::live_parents<S>({&x, &y}), result.size(),
                                 [xn, yn, xd, yd](const std::vector<S>& g) {
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                     if (xn) xn->grad[i] += g[i] * (*yd)[i];
                                     if (yn) yn->grad[i] += g[i] * (*xd)[i];
                                   }
                                 }));
  }
  return result;
}

template <typename S>
Tensor<S> neg(const Tensor<S>& x) {
  std::vector<S> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -x.data()[i];
  Tensor<S> result(x.shape(), std::move(out));
  if (x.node()) {
    auto xn = x.node();
    result.set_node(make_node<S>("neg", {xn}, result.size(), [xn](const std::vector<S>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) xn->grad[i] -= g[i];
    }));
  }
  return result;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S factor) {
  std::vector<S> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * x.data()[i];
  Tensor<S> result(x.shape(), std::move(out));
  if (x.node()) {
    auto xn = x.node();
    result.set_node(make_node<S>("scale", {xn}, result.size(),
                                 [xn, factor](const std::vector<S>& g) {
                                   for (std::size_t i = 0; i < g.size(); ++i)
                                     xn->grad[i] += factor * g[i];
                                 }));
  }
  return result;
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& x, S value) {
  std::vector<S> out(x.data());
  for (auto& v : out) v += value;
  Tensor<S> result(x.shape(), std::move(out));
  if (x.node()) {
    auto xn = x.node();
    result.set_node(make_node<S>("add_scalar", {xn}, result.size(),
                                 [xn](const std::vector<S>& g) { detail::accumulate(xn->grad, g); }));
  }
  return result;
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  std::vector<S> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.data()[i]);
  Tensor<S> result(x.shape(), std::move(out));
  if (x.node()) {
    auto xn = x.node();
    auto saved = result.data_handle();
    result.set_node(make_node<S>("exp", {xn}, result.size(),
                                 [xn, saved](const std::vector<S>& g) {
                                   for (std::size_t i = 0; i < g.size(); ++i)
                                     xn->grad[i] += g[i] * (*saved)[i];
                                 }));
  }
  return result;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  std::vector<S> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const S v = x.data()[i];
    if (v >= S(0)) {
      out[i] = S(1) / (S(1) + std::exp(-v));
    } else {
      const S e = std::exp(v);  // stable branch for large negative inputs
      out[i] = e / (S(1) + e);
    }
  }
  Tensor<S> result(x.shape(), std::move(out));
  if (x.node()) {
    auto xn = x.node();
    auto saved = result.data_handle();
    result.set_node(make_node<S>("sigmoid", {xn}, result.size(),
                                 [xn, saved](const std::vector<S>& g) {
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                     const S y = (*saved)[i];
                                     xn->grad[i] += g[i] * y * (S(1) - y);
                                   }
                                 }));
  }
  return result;
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope) {
  if (!(slope >= S(0) && slope < S(1))) throw Error("leaky_relu: slope must be in [0, 1)");
  std::vector<S> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const S v = x.data()[i];
    out[i] = v >= S(0) ? v : slope * v;
  }
  Tensor<S> result(x.shape(), std::move(out));
  if (x.node()) {
    auto xn = x.node();
    auto saved = x.data_handle();
    result.set_node(make_node<S>("leaky_relu", {xn}, result.size(),
                                 [xn, saved, slope](const std::vector<S>& g) {
                                   for (std::size_t i = 0; i < g.size(); ++i)
                                     xn->grad[i] += g[i] * ((*saved)[i] >= S(0) ? S(1) : slope);
                                 }));
  }
  return result;
}

template <typename S>
Tensor<S> clamp(const Tensor<S>& x, S lo, S hi) {
  std::vector<S> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::min(std::max(x.data()[i], lo), hi);
  }
  Tensor<S> result(x.shape(), std::move(out));
  if (x.node()) {
    auto xn = x.node();
    auto saved = x.data_handle();
    result.set_node(make_node<S>("clamp", {xn}, result.size(),
                                 [xn, saved, lo, hi](const std::vector<S>& g) {
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                     const S v = (*saved)[i];
                                     if (v >= lo && v <= hi) xn->grad[i] += g[i];
                                   }
                                 }));
  }
  return result;
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (numel(shape) != x.size()) throw ShapeMismatch("reshape: element count mismatch");
  Tensor<S> result(std::move(shape), std::vector<S>(x.data()));
  if (x.node()) {
    auto xn = x.node();
    result.set_node(make_node<S>("reshape", {xn}, result.size(),
                                 [xn](const std::vector<S>& g) { detail::accumulate(xn->grad, g); }));
  }
  return result;
}

/// Takes channels [c0, c1) of a [N, C, ...] tensor.
template <typename S>
Tensor<S> slice_channels(const Tensor<S>& x, std::int64_t c0, std::int64_t c1) {
  if (x.shape().size() < 2) throw ShapeMismatch("slice_channels: rank must be >= 2");
  const std::int64_t outer = x.shape()[0];
  const std::int64_t channels = x.shape()[1];
  if (c0 < 0 || c1 > channels || c0 >= c1) throw ShapeMismatch("slice_channels: bad range");
  std::int64_t inner = 1;
  for (std::size_t i = 2; i < x.shape().size(); ++i) inner *= x.shape()[i];

  Shape out_shape = x.shape();
  out_shape[1] = c1 - c0;
  std::vector<S> out(static_cast<std::size_t>(outer * (c1 - c0) * inner));
  const S* src = x.data().data();
  for (std::int64_t n = 0; n < outer; ++n) {
    const S* from = src + (n * channels + c0) * inner;
    std::copy(from, from + (c1 - c0) * inner, out.data() + n * (c1 - c0) * inner);
  }
  Tensor<S> result(std::move(out_shape), std::move(out));
  if (x.node()) {
    auto xn = x.node();
    result.set_node(make_node<S>("slice_channels", {xn}, result.size(),
                                 [xn, outer, channels, inner, c0, c1](const std::vector<S>& g) {
                                   for (std::int64_t n = 0; n < outer; ++n) {
                                     S* dst = xn->grad.data() + (n * channels + c0) * inner;
                                     const S* from = g.data() + n * (c1 - c0) * inner;
                                     for (std::int64_t i = 0; i < (c1 - c0) * inner; ++i)
                                       dst[i] += from[i];
                                   }
                                 }));
  }
  return result;
}

/// Concatenates along axis 1; all inputs share the other extents.
template <typename S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw ShapeMismatch("concat_channels: empty input");
  const Shape& base = xs.front().shape();
  if (base.size() < 2) throw ShapeMismatch("concat_channels: rank must be >= 2");
  const std::int64_t outer = base[0];
  std::int64_t inner = 1;
  for (std::size_t i = 2; i < base.size(); ++i) inner *= base[i];
  std::int64_t channels = 0;
  for (const auto& x : xs) {
    Shape expect = base;
    expect[1] = x.shape()[1];
    if (x.shape() != expect) throw ShapeMismatch("concat_channels: incompatible shapes");
    channels += x.shape()[1];
  }

  Shape out_shape = base;
  out_shape[1] = channels;
  std::vector<S> out(static_cast<std::size_t>(outer * channels * inner));
  std::int64_t offset = 0;
  for (const auto& x : xs) {
    const std::int64_t c = x.shape()[1];
    for (std::int64_t n = 0; n < outer; ++n) {
      std::copy(x.data().data() + n * c * inner, x.data().data() + (n + 1) * c * inner,
                out.data() + (n * channels + offset) * inner);
    }
    offset += c;
  }

  Tensor<S> result(std::move(out_shape), std::move(out));
  bool any_grad = false;
  for (const auto& x : xs) any_grad |= x.requires_grad();
  if (any_grad) {
    struct Piece {
      std::shared_ptr<Node<S>> node;
      std::int64_t offset;
      std::int64_t channels;
    };
    std::vector<Piece> pieces;
    std::vector<std::shared_ptr<Node<S>>> parents;
    std::int64_t at = 0;
    for (const auto& x : xs) {
      if (x.node()) {
        pieces.push_back({x.node(), at, x.shape()[1]});
        parents.push_back(x.node());
      }
      at += x.shape()[1];
    }
    result.set_node(make_node<S>("concat_channels", std::move(parents), result.size(),
                                 [pieces, outer, channels, inner](const std::vector<S>& g) {
                                   for (const auto& p : pieces) {
                                     for (std::int64_t n = 0; n < outer; ++n) {
                                       const S* from = g.data() + (n * channels + p.offset) * inner;
                                       S* dst = p.node->grad.data() + n * p.channels * inner;
                                       for (std::int64_t i = 0; i < p.channels * inner; ++i)
                                         dst[i] += from[i];
                                     }
                                   }
                                 }));
  }
  return result;
}

/// [N, F] -> [N, 4F]: repeats the feature block four times (component
/// broadcast for quaternion arrays in split layout).
template <typename S>
Tensor<S> tile4(const Tensor<S>& x) {
  if (x.shape().size() != 2) throw ShapeMismatch("tile4: expects [N, F]");
  const std::int64_t n = x.shape()[0], f = x.shape()[1];
  std::vector<S> out(static_cast<std::size_t>(n * 4 * f));
  for (std::int64_t row = 0; row < n; ++row) {
    for (int r = 0; r < 4; ++r) {
      std::copy(x.data().data() + row * f, x.data().data() + (row + 1) * f,
                out.data() + (row * 4 + r) * f);
    }
  }
  Tensor<S> result({n, 4 * f}, std::move(out));
  if (x.node()) {
    auto xn = x.node();
    result.set_node(make_node<S>("tile4", {xn}, result.size(),
                                 [xn, n, f](const std::vector<S>& g) {
                                   for (std::int64_t row = 0; row < n; ++row)
                                     for (int r = 0; r < 4; ++r)
                                       for (std::int64_t i = 0; i < f; ++i)
                                         xn->grad[row * f + i] += g[(row * 4 + r) * f + i];
                                 }));
  }
  return result;
}

/// Adds bias[c] to every element of channel c of a [N, C, ...] tensor.
template <typename S>
Tensor<S> add_channel_bias(const Tensor<S>& x, const Tensor<S>& bias) {
  if (x.shape().size() < 2) throw ShapeMismatch("add_channel_bias: rank must be >= 2");
  const std::int64_t outer = x.shape()[0];
  const std::int64_t channels = x.shape()[1];
  if (bias.shape() != Shape{channels}) throw ShapeMismatch("add_channel_bias: bias shape");
  std::int64_t inner = 1;
  for (std::size_t i = 2; i < x.shape().size(); ++i) inner *= x.shape()[i];

  std::vector<S> out(x.data());
  for (std::int64_t n = 0; n < outer; ++n)
    for (std::int64_t c = 0; c < channels; ++c) {
      const S b = bias.data()[c];
      S* dst = out.data() + (n * channels + c) * inner;
      for (std::int64_t i = 0; i < inner; ++i) dst[i] += b;
    }

  Tensor<S> result(x.shape(), std::move(out));
  if (x.node() || bias.node()) {
    auto xn = x.node(), bn = bias.node();
    result.set_node(make_node<S>("add_channel_bias", detail::live_parents<S>({&x, &bias}),
                                 result.size(),
                                 [xn, bn, outer, channels, inner](const std::vector<S>& g) {
                                   if (xn) detail::accumulate(xn->grad, g);
                                   if (bn) {
                                     for (std::int64_t n = 0; n < outer; ++n)
                                       for (std::int64_t c = 0; c < channels; ++c) {
                                         S sum = S(0);
                                         const S* from = g.data() + (n * channels + c) * inner;
                                         for (std::int64_t i = 0; i < inner; ++i) sum += from[i];
                                         bn->grad[c] += sum;
                                       }
                                   }
                                 }));
  }
  return result;
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  S total = S(0);
  for (S v : x.data()) total += v;
  Tensor<S> result({1}, std::vector<S>{total});
  if (x.node()) {
    auto xn = x.node();
    result.set_node(make_node<S>("sum_all", {xn}, 1, [xn](const std::vector<S>& g) {
      for (auto& v : xn->grad) v += g[0];
    }));
  }
  return result;
}

/// Mean binary cross entropy; predictions are clamped into
/// [eps, 1 - eps] with eps = 1e-7 before the logs.
template <typename S>
Tensor<S> bce_loss(const Tensor<S>& prediction, const Tensor<S>& target) {
  detail::check_same_shape(prediction, target, "bce_loss");
  const S eps = S(1e-7);
  const S lo = eps, hi = S(1) - eps;
  const std::int64_t count = prediction.size();
  double total = 0.0;  // accumulate the mean in double regardless of S
  for (std::int64_t i = 0; i < count; ++i) {
    const S p = std::min(std::max(prediction.data()[i], lo), hi);
    const S t = target.data()[i];
    total -= double(t) * std::log(double(p)) + double(S(1) - t) * std::log(double(S(1) - p));
  }
  Tensor<S> result({1}, std::vector<S>{S(total / double(count))});
  if (prediction.node()) {
    auto pn = prediction.node();
    auto pd = prediction.data_handle();
    auto td = target.data_handle();
    result.set_node(make_node<S>("bce_loss", {pn}, 1,
                                 [pn, pd, td, lo, hi, count](const std::vector<S>& g) {
                                   const S scale = g[0] / S(count);
                                   for (std::int64_t i = 0; i < count; ++i) {
                                     const S raw = (*pd)[i];
                                     if (raw < lo || raw > hi) continue;  // clamped: flat
                                     const S t = (*td)[i];
                                     pn->grad[i] += scale * (raw - t) / (raw * (S(1) - raw));
                                   }
                                 }));
  }
  return result;
}

}  // namespace qv::ad
