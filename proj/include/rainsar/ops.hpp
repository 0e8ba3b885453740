#pragma once

#include <vector>

#include "rainsar/tensor.hpp"

namespace rainsar::nn {

// Image tensors are NCHW, contiguous, row-major.

struct Conv2dOptions {
    Index stride = 1;
    Index padding = 0;
};

/// x [N,Ci,H,W], weight [Co,Ci,K,K], bias [Co] (may be undefined).
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                      Conv2dOptions opt = {});

/// x [N,Ci,H,W], weight [Ci,Co,K,K]; output (H-1)*stride - 2*padding + K.
template <typename Scalar>
Tensor<Scalar> conv_transpose2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                                Conv2dOptions opt = {});

/// Non-overlapping k x k windows; the first maximum in scan order wins.
template <typename Scalar>
Tensor<Scalar> max_pool2d(const Tensor<Scalar>& x, Index kernel = 2);

template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<Tensor<Scalar>>& parts);

/// [N,C] -> [N,C,H,W], each scalar repeated over the map.
template <typename Scalar>
Tensor<Scalar> broadcast_to_map(const Tensor<Scalar>& scalars, Index height, Index width);

template <typename Scalar> Tensor<Scalar> relu(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> sigmoid(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> softplus(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> log(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> square(const Tensor<Scalar>& x);
/// Gradient is taken as zero where the result is zero.
template <typename Scalar> Tensor<Scalar> sqrt(const Tensor<Scalar>& x);
/// Subgradient zero at the origin.
template <typename Scalar> Tensor<Scalar> abs(const Tensor<Scalar>& x);

/// Same shapes, or either side a single element (broadcast).
template <typename Scalar> Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar k);
template <typename Scalar> Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar k);

template <typename Scalar> Tensor<Scalar> sum(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> mean(const Tensor<Scalar>& x);

/// [N,...] -> [N], mean over all but the leading axis.
template <typename Scalar> Tensor<Scalar> mean_per_sample(const Tensor<Scalar>& x);

/// [N,...] with a constant mask of equal shape -> [N]. Samples with an empty
/// mask yield 0 and receive no gradient.
template <typename Scalar>
Tensor<Scalar> masked_mean(const Tensor<Scalar>& x, const Buffer<Scalar>& mask);
template <typename Scalar>
Tensor<Scalar> masked_max(const Tensor<Scalar>& x, const Buffer<Scalar>& mask);

/// sum(w * x) / sum(w) over a [N] tensor with constant weights; 0 if sum(w) = 0.
template <typename Scalar>
Tensor<Scalar> weighted_mean(const Tensor<Scalar>& x, const Buffer<Scalar>& weights);

template <typename Scalar> Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar> Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar> Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return mul(a, b); }
template <typename Scalar> Tensor<Scalar> operator/(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return div(a, b); }
template <typename Scalar> Tensor<Scalar> operator*(Scalar k, const Tensor<Scalar>& a) { return scale(a, k); }

namespace kernels {

struct ConvDims {
    Index n, ci, h, w, co, k, stride, padding, ho, wo;
};

ConvDims conv_dims(const Shape& x, const Shape& w, Index stride, Index padding);

/// Direct summation: bias then (ci, ky, kx) ascending per output element.
template <typename Scalar>
void conv2d_reference(const ConvDims& d, const Scalar* x, const Scalar* w, const Scalar* b, Scalar* out);

/// Row-vectorised kernel with the same per-element accumulation order.
template <typename Scalar>
void conv2d_fast(const ConvDims& d, const Scalar* x, const Scalar* w, const Scalar* b, Scalar* out);

}  // namespace kernels

}  // namespace rainsar::nn
