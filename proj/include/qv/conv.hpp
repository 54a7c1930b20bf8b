#pragma once

#include <Eigen/Core>

#include "qv/ops.hpp"

namespace qv::ad {

namespace detail {

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// Geometry of one convolution: maps [batch, channels, height, width] patches
/// (kernel k, given stride/pad) onto a [out_h, out_w] grid.
struct ConvGeometry {
  std::int64_t batch, channels, height, width;
  std::int64_t k, stride, pad;
  std::int64_t out_h, out_w;

  std::int64_t patch_rows() const { return channels * k * k; }
  std::int64_t out_positions() const { return batch * out_h * out_w; }
};

inline std::int64_t conv_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                                std::int64_t pad) {
  const std::int64_t span = in + 2 * pad - k;
  if (span < 0 || span % stride != 0) {
    throw InvalidGeometry("conv2d: output extent is not a positive integer");
  }
  return span / stride + 1;
}

/// Patch gather: dst is row-major [channels*k*k][batch*out_h*out_w].
template <typename S>
void im2col(const S* src, const ConvGeometry& g, S* dst) {
  const std::int64_t ohw = g.out_h * g.out_w;
  const std::int64_t width_all = g.out_positions();
  parallel_for(g.batch, [&](std::int64_t n0, std::int64_t n1) {
    for (std::int64_t n = n0; n < n1; ++n) {
      for (std::int64_t c = 0; c < g.channels; ++c) {
        const S* plane = src + (n * g.channels + c) * g.height * g.width;
        for (std::int64_t ky = 0; ky < g.k; ++ky) {
          for (std::int64_t kx = 0; kx < g.k; ++kx) {
            const std::int64_t row = (c * g.k + ky) * g.k + kx;
            S* out_row = dst + row * width_all + n * ohw;
            for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
              const std::int64_t iy = oy * g.stride - g.pad + ky;
              S* line = out_row + oy * g.out_w;
              if (iy < 0 || iy >= g.height) {
                for (std::int64_t ox = 0; ox < g.out_w; ++ox) line[ox] = S(0);
                continue;
              }
              for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
                const std::int64_t ix = ox * g.stride - g.pad + kx;
                line[ox] = (ix < 0 || ix >= g.width) ? S(0) : plane[iy * g.width + ix];
              }
            }
          }
        }
      }
    }
  });
}

/// Adjoint of im2col: scatter-adds patch rows back onto the image grid.
template <typename S>
void col2im_add(const S* cols, const ConvGeometry& g, S* dst) {
  const std::int64_t ohw = g.out_h * g.out_w;
  const std::int64_t width_all = g.out_positions();
  parallel_for(g.batch, [&](std::int64_t n0, std::int64_t n1) {
    for (std::int64_t n = n0; n < n1; ++n) {
      for (std::int64_t c = 0; c < g.channels; ++c) {
        S* plane = dst + (n * g.channels + c) * g.height * g.width;
        for (std::int64_t ky = 0; ky < g.k; ++ky) {
          for (std::int64_t kx = 0; kx < g.k; ++kx) {
            const std::int64_t row = (c * g.k + ky) * g.k + kx;
            const S* in_row = cols + row * width_all + n * ohw;
            for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
              const std::int64_t iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.height) continue;
              const S* line = in_row + oy * g.out_w;
              for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
                const std::int64_t ix = ox * g.stride - g.pad + kx;
                if (ix >= 0 && ix < g.width) plane[iy * g.width + ix] += line[ox];
              }
            }
          }
        }
      }
    }
  });
}

/// [N][C][inner] -> [C][N*inner] gather.
template <typename S>
void nc_to_cn(const S* src, std::int64_t n, std::int64_t c, std::int64_t inner, S* dst) {
  parallel_for(n, [&](std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b)
      for (std::int64_t ch = 0; ch < c; ++ch)
        std::copy(src + (b * c + ch) * inner, src + (b * c + ch + 1) * inner,
                  dst + ch * n * inner + b * inner);
  });
}

/// [C][N*inner] -> [N][C][inner] scatter-add.
template <typename S>
void cn_to_nc_add(const S* src, std::int64_t n, std::int64_t c, std::int64_t inner, S* dst) {
  parallel_for(n, [&](std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const S* from = src + ch * n * inner + b * inner;
        S* to = dst + (b * c + ch) * inner;
        for (std::int64_t i = 0; i < inner; ++i) to[i] += from[i];
      }
  });
}

}  // namespace detail

/// Cross-correlation of [N, C_in, H, W] with kernel [C_out, C_in, k, k].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernel, const Tensor<S>* bias,
                 std::int64_t stride, std::int64_t padding) {
  if (input.shape().size() != 4 || kernel.shape().size() != 4) {
    throw ShapeMismatch("conv2d: input and kernel must be rank 4");
  }
  if (kernel.shape()[2] != kernel.shape()[3]) throw ShapeMismatch("conv2d: kernel must be square");
  if (kernel.shape()[1] != input.shape()[1]) throw ShapeMismatch("conv2d: channel mismatch");
  if (stride < 1 || padding < 0) throw InvalidGeometry("conv2d: bad stride or padding");
  if (bias && bias->shape() != Shape{kernel.shape()[0]}) {
    throw ShapeMismatch("conv2d: bias shape must be [C_out]");
  }

  const std::int64_t batch = input.shape()[0], c_in = input.shape()[1];
  const std::int64_t height = input.shape()[2], width = input.shape()[3];
  const std::int64_t c_out = kernel.shape()[0], k = kernel.shape()[2];
  detail::ConvGeometry g{batch, c_in,   height,
                         width, k,      stride,
                         padding, detail::conv_extent(height, k, stride, padding),
                         detail::conv_extent(width, k, stride, padding)};

  auto cols = std::make_shared<std::vector<S>>(
      static_cast<std::size_t>(g.patch_rows() * g.out_positions()));
  detail::im2col(input.data().data(), g, cols->data());

  std::vector<S> out_cn(static_cast<std::size_t>(c_out * g.out_positions()));
  {
    detail::ConstMatMap<S> kmat(kernel.data().data(), c_out, g.patch_rows());
    detail::ConstMatMap<S> cmat(cols->data(), g.patch_rows(), g.out_positions());
    detail::MatMap<S> omat(out_cn.data(), c_out, g.out_positions());
    omat.noalias() = kmat * cmat;
  }

  std::vector<S> out(static_cast<std::size_t>(batch * c_out * g.out_h * g.out_w));
  const std::int64_t ohw = g.out_h * g.out_w;
  parallel_for(batch, [&](std::int64_t b0, std::int64_t b1) {
    for (std::int64_t n = b0; n < b1; ++n)
      for (std::int64_t co = 0; co < c_out; ++co) {
        const S* from = out_cn.data() + co * batch * ohw + n * ohw;
        S* to = out.data() + (n * c_out + co) * ohw;
        if (bias) {
          const S b = bias->data()[co];
          for (std::int64_t i = 0; i < ohw; ++i) to[i] = from[i] + b;
        } else {
          std::copy(from, from + ohw, to);
        }
      }
  });

  Tensor<S> result({batch, c_out, g.out_h, g.out_w}, std::move(out));
  const bool any = input.requires_grad() || kernel.requires_grad() || (bias && bias->requires_grad());
  if (any) {
    auto xn = input.node(), kn = kernel.node();
    auto bn = bias ? bias->node() : nullptr;
    auto kd = kernel.data_handle();
    std::vector<std::shared_ptr<Node<S>>> parents;
    for (const auto& p : {xn, kn, bn})
      if (p) parents.push_back(p);
    result.set_node(make_node<S>(
        "conv2d", std::move(parents), result.size(),
        [xn, kn, bn, kd, cols, g, c_out](const std::vector<S>& grad_out) {
          const std::int64_t ohw = g.out_h * g.out_w;
          std::vector<S> g_cn(static_cast<std::size_t>(c_out * g.out_positions()));
          detail::nc_to_cn(grad_out.data(), g.batch, c_out, ohw, g_cn.data());
          detail::ConstMatMap<S> gmat(g_cn.data(), c_out, g.out_positions());
          if (kn) {
            detail::ConstMatMap<S> cmat(cols->data(), g.patch_rows(), g.out_positions());
            detail::MatMap<S> dk(kn->grad.data(), c_out, g.patch_rows());
            dk.noalias() += gmat * cmat.transpose();
          }
          if (xn) {
            std::vector<S> dcols(static_cast<std::size_t>(g.patch_rows() * g.out_positions()));
            detail::ConstMatMap<S> kmat(kd->data(), c_out, g.patch_rows());
            detail::MatMap<S> dmat(dcols.data(), g.patch_rows(), g.out_positions());
            dmat.noalias() = kmat.transpose() * gmat;
            detail::col2im_add(dcols.data(), g, xn->grad.data());
          }
          if (bn) {
            for (std::int64_t co = 0; co < c_out; ++co) {
              S sum = S(0);
              const S* row = g_cn.data() + co * g.out_positions();
              for (std::int64_t i = 0; i < g.out_positions(); ++i) sum += row[i];
              bn->grad[co] += sum;
            }
          }
        }));
  }
  return result;
}

/// Adjoint of conv2d. Kernel layout is [C_in, C_out, k, k] and the output
/// extent is (H - 1) * stride - 2 * padding + k.
template <typename S>
Tensor<S> transposed_conv2d(const Tensor<S>& input, const Tensor<S>& kernel, const Tensor<S>* bias,
                            std::int64_t stride, std::int64_t padding) {
  if (input.shape().size() != 4 || kernel.shape().size() != 4) {
    throw ShapeMismatch("transposed_conv2d: input and kernel must be rank 4");
  }
  if (kernel.shape()[2] != kernel.shape()[3]) {
    throw ShapeMismatch("transposed_conv2d: kernel must be square");
  }
  if (kernel.shape()[0] != input.shape()[1]) {
    throw ShapeMismatch("transposed_conv2d: channel mismatch");
  }
  if (stride < 1 || padding < 0) throw InvalidGeometry("transposed_conv2d: bad stride or padding");

  const std::int64_t batch = input.shape()[0], c_in = input.shape()[1];
  const std::int64_t height = input.shape()[2], width = input.shape()[3];
  const std::int64_t c_out = kernel.shape()[1], k = kernel.shape()[2];
  const std::int64_t out_h = (height - 1) * stride - 2 * padding + k;
  const std::int64_t out_w = (width - 1) * stride - 2 * padding + k;
  if (out_h < 1 || out_w < 1) throw InvalidGeometry("transposed_conv2d: empty output");
  if (bias && bias->shape() != Shape{c_out}) {
    throw ShapeMismatch("transposed_conv2d: bias shape must be [C_out]");
  }

  // The op is the input-gradient of a conv mapping [N, C_out, out_h, out_w]
  // onto [N, C_in, H, W]; g describes that conv.
  detail::ConvGeometry g{batch, c_out, out_h, out_w, k, stride, padding, height, width};

  auto xd = input.data_handle();
  std::vector<S> x_cn(static_cast<std::size_t>(c_in * batch * height * width));
  detail::nc_to_cn(xd->data(), batch, c_in, height * width, x_cn.data());

  std::vector<S> dcols(static_cast<std::size_t>(g.patch_rows() * g.out_positions()));
  {
    detail::ConstMatMap<S> kmat(kernel.data().data(), c_in, g.patch_rows());
    detail::ConstMatMap<S> xmat(x_cn.data(), c_in, g.out_positions());
    detail::MatMap<S> dmat(dcols.data(), g.patch_rows(), g.out_positions());
    dmat.noalias() = kmat.transpose() * xmat;
  }

  std::vector<S> out(static_cast<std::size_t>(batch * c_out * out_h * out_w), S(0));
  detail::col2im_add(dcols.data(), g, out.data());
  if (bias) {
    const std::int64_t inner = out_h * out_w;
    for (std::int64_t n = 0; n < batch; ++n)
      for (std::int64_t co = 0; co < c_out; ++co) {
        const S b = bias->data()[co];
        S* to = out.data() + (n * c_out + co) * inner;
        for (std::int64_t i = 0; i < inner; ++i) to[i] += b;
      }
  }

  Tensor<S> result({batch, c_out, out_h, out_w}, std::move(out));
  const bool any = input.requires_grad() || kernel.requires_grad() || (bias && bias->requires_grad());
  if (any) {
    auto xn = input.node(), kn = kernel.node();
    auto bn = bias ? bias->node() : nullptr;
    auto kd = kernel.data_handle();
    std::vector<std::shared_ptr<Node<S>>> parents;
    for (const auto& p : {xn, kn, bn})
      if (p) parents.push_back(p);
    result.set_node(make_node<S>(
        "transposed_conv2d", std::move(parents), result.size(),
        [xn, kn, bn, kd, xd, g, c_in, c_out](const std::vector<S>& grad_out) {
          std::vector<S> gcols(static_cast<std::size_t>(g.patch_rows() * g.out_positions()));
          detail::im2col(grad_out.data(), g, gcols.data());
          detail::ConstMatMap<S> gmat(gcols.data(), g.patch_rows(), g.out_positions());
          if (xn) {
            std::vector<S> dx_cn(static_cast<std::size_t>(c_in * g.out_positions()));
            detail::ConstMatMap<S> kmat(kd->data(), c_in, g.patch_rows());
            detail::MatMap<S> dxmat(dx_cn.data(), c_in, g.out_positions());
            dxmat.noalias() = kmat * gmat;
            detail::cn_to_nc_add(dx_cn.data(), g.batch, c_in, g.out_h * g.out_w, xn->grad.data());
          }
          if (kn) {
            std::vector<S> x_cn(static_cast<std::size_t>(c_in * g.out_positions()));
            detail::nc_to_cn(xd->data(), g.batch, c_in, g.out_h * g.out_w, x_cn.data());
            detail::ConstMatMap<S> xmat(x_cn.data(), c_in, g.out_positions());
            detail::MatMap<S> dk(kn->grad.data(), c_in, g.patch_rows());
            dk.noalias() += xmat * gmat.transpose();
          }
          if (bn) {
            const std::int64_t inner = g.height * g.width;  // tconv output spatial
            for (std::int64_t n = 0; n < g.batch; ++n)
              for (std::int64_t co = 0; co < c_out; ++co) {
                S sum = S(0);
                const S* from = grad_out.data() + (n * c_out + co) * inner;
                for (std::int64_t i = 0; i < inner; ++i) sum += from[i];
                bn->grad[co] += sum;
              }
          }
        }));
  }
  return result;
}

/// Affine map [N, F_in] x [F_out, F_in] -> [N, F_out].
template <typename S>
Tensor<S> dense(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>* bias) {
  if (input.shape().size() != 2 || weight.shape().size() != 2) {
    throw ShapeMismatch("dense: input and weight must be rank 2");
  }
  if (input.shape()[1] != weight.shape()[1]) throw ShapeMismatch("dense: feature mismatch");
  const std::int64_t batch = input.shape()[0];
  const std::int64_t f_in = input.shape()[1], f_out = weight.shape()[0];
  if (bias && bias->shape() != Shape{f_out}) throw ShapeMismatch("dense: bias shape");

  std::vector<S> out(static_cast<std::size_t>(batch * f_out));
  {
    detail::ConstMatMap<S> in_mat(input.data().data(), batch, f_in);
    detail::ConstMatMap<S> w_mat(weight.data().data(), f_out, f_in);
    detail::MatMap<S> out_mat(out.data(), batch, f_out);
    out_mat.noalias() = in_mat * w_mat.transpose();
    if (bias) {
      for (std::int64_t n = 0; n < batch; ++n)
        for (std::int64_t f = 0; f < f_out; ++f) out[n * f_out + f] += bias->data()[f];
    }
  }

  Tensor<S> result({batch, f_out}, std::move(out));
  const bool any = input.requires_grad() || weight.requires_grad() || (bias && bias->requires_grad());
  if (any) {
    auto xn = input.node(), wn = weight.node();
    auto bn = bias ? bias->node() : nullptr;
    auto xd = input.data_handle(), wd = weight.data_handle();
    std::vector<std::shared_ptr<Node<S>>> parents;
    for (const auto& p : {xn, wn, bn})
      if (p) parents.push_back(p);
    result.set_node(make_node<S>(
        "dense", std::move(parents), result.size(),
        [xn, wn, bn, xd, wd, batch, f_in, f_out](const std::vector<S>& grad_out) {
          detail::ConstMatMap<S> gmat(grad_out.data(), batch, f_out);
          if (xn) {
            detail::ConstMatMap<S> wmat(wd->data(), f_out, f_in);
            detail::MatMap<S> dx(xn->grad.data(), batch, f_in);
            dx.noalias() += gmat * wmat;
          }
          if (wn) {
            detail::ConstMatMap<S> xmat(xd->data(), batch, f_in);
            detail::MatMap<S> dw(wn->grad.data(), f_out, f_in);
            dw.noalias() += gmat.transpose() * xmat;
          }
          if (bn) {
            for (std::int64_t n = 0; n < batch; ++n)
              for (std::int64_t f = 0; f < f_out; ++f) bn->grad[f] += grad_out[n * f_out + f];
          }
        }));
  }
  return result;
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernel, std::nullptr_t,
                 std::int64_t stride, std::int64_t padding) {
  return conv2d(input, kernel, static_cast<const Tensor<S>*>(nullptr), stride, padding);
}

template <typename S>
Tensor<S> transposed_conv2d(const Tensor<S>& input, const Tensor<S>& kernel, std::nullptr_t,
                            std::int64_t stride, std::int64_t padding) {
  return transposed_conv2d(input, kernel, static_cast<const Tensor<S>*>(nullptr), stride, padding);
}

template <typename S>
Tensor<S> dense(const Tensor<S>& input, const Tensor<S>& weight, std::nullptr_t) {
  return dense(input, weight, static_cast<const Tensor<S>*>(nullptr));
}

}  // namespace qv::ad
