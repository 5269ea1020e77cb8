#pragma once

#include <cstdint>
#include <vector>

#include "garamost/tensor.hpp"

// Differentiable primitives. Every function records itself on the autodiff
// tape when any input requires grad and grad mode is on. Shapes must agree
// exactly; the only broadcast is tensor-with-scalar.

namespace garamost {

// ---- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> abs(const Tensor<T>& x);
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

// Per-channel (axis 1) negative slope; slope has shape (1) or (C).
template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}

// ---- reductions ------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// ---- normalization ---------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

// Normalizes each 1-D fiber along `axis` to zero mean / unit variance, then
// applies gain and shift (both of length shape[axis]).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift, int axis, T eps = T(1e-6));

// ---- layout ----------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t begin, std::int64_t end);

// 2-D (M,K)x(K,N) or batched 3-D (B,M,K)x(B,K,N); transposes apply to the
// last two axes.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false, bool trans_b = false);

// ---- image ops (NCHW) ------------------------------------------------------

template <typename T>
struct ConvSpec {
  Tensor<T> kernel;  // (out_ch, in_ch / groups, kh, kw)
  Tensor<T> bias;    // (out_ch) or undefined
  int stride = 1;
  int dilation = 1;
  int padding = 0;
  int groups = 1;
};

std::int64_t conv_output_size(std::int64_t in, std::int64_t kernel, int stride, int dilation, int padding);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvSpec<T>& spec);

// Backward warp: out(x, y) = img sampled bilinearly at (x + u, y + v) with the
// sample coordinate clamped to the image (border replication).
template <typename T>
Tensor<T> bilinear_warp(const Tensor<T>& img, const Tensor<T>& flow);

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r);
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r);

// Half-pixel-centred bilinear resize (no corner alignment).
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w);
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, double scale);

// Pads bottom/right by reflection (edge pixel not repeated).
template <typename T>
Tensor<T> reflect_pad(const Tensor<T>& x, std::int64_t pad_bottom, std::int64_t pad_right);
template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::int64_t height, std::int64_t width);

// out[n,c,y,x] = sum over the r*r window offsets o of
//   weights[n, o, y, x] * values[n, c, y + dy(o), x + dx(o)],
// zero outside the map. Offsets are row-major over [-r/2, r/2]^2.
template <typename T>
Tensor<T> local_aggregate(const Tensor<T>& weights, const Tensor<T>& values, int r);

}  // namespace garamost
