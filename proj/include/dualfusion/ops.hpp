#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dualfusion/tensor.hpp"

// Differentiable tensor operations. Image-like tensors are N x C x H x W.
namespace dualfusion::ops {

// Pointwise arithmetic on equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double b);
Tensor scale(const Tensor& a, double s);

// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);
// x [N,in], weight [out,in], bias [out] (may be undefined) -> [N,out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

enum class Padding { zeros, replicate };

// Stride-1 "same" convolution with an odd square kernel.
// x [N,C,H,W], weight [O,C,k,k], bias [O] (may be undefined) -> [N,O,H,W]
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Padding padding = Padding::zeros);
// 2x2 average pooling; H and W must be even.
Tensor downsample2x(const Tensor& x);
Tensor upsample2x_nearest(const Tensor& x);

// Per-(sample, channel) statistics over all trailing axes: [N,C,...] -> [N,C].
Tensor channel_mean(const Tensor& x);
// Population variance (divides by the element count).
Tensor channel_var(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Concatenates along axis 1; all other extents must agree.
Tensor concat_channels(std::span<const Tensor> parts);
Tensor concat_channels(std::initializer_list<Tensor> parts);
// Mean of squared differences over all elements.
Tensor mse(const Tensor& a, const Tensor& b);

Tensor silu(const Tensor& x);
// Group normalization without affine terms: each sample's channels are split
// into `groups` contiguous groups normalized to zero mean, unit variance.
Tensor normalize_channels(const Tensor& x, std::size_t groups, double eps = 1e-5);

// x [N,C,...] scaled / shifted per (sample, channel) by s [N,C].
Tensor mul_channels(const Tensor& x, const Tensor& s);
Tensor add_channels(const Tensor& x, const Tensor& b);

// Row n of the result is a[n] when use_a[n] is set, otherwise the shared
// row b (shape a.shape() without the leading axis). Gradients route to the
// chosen source.
Tensor select_rows(std::span<const std::uint8_t> use_a, const Tensor& a, const Tensor& b);

// Untracked: stacks equal-shape tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);
// Untracked: row n of a leading-axis batch.
Tensor row(const Tensor& x, std::size_t n);

}  // namespace dualfusion::ops
