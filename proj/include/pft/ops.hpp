#pragma once

#include <cstdint>
#include <vector>

#include "pft/grad_tape.hpp"
#include "pft/tensor.hpp"

// Differentiable tensor operations. Every op records itself on the active
// GradTape when one of its inputs is tracked.
namespace pft::ops {

// -- shape ------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// out.shape[i] = x.shape[axes[i]].
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);

/// Swaps the trailing two axes.
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x);

/// Zero padding along one axis.
template <typename T>
Tensor<T> pad(const Tensor<T>& x, std::size_t axis, std::size_t before, std::size_t after);

/// Contiguous slice [start, start + length) along one axis.
template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);

/// Torus roll: out[..., i, ...] = x[..., (i - shift) mod n, ...].
template <typename T>
Tensor<T> roll(const Tensor<T>& x, std::size_t axis, std::int64_t shift);

/// out[i, ...] = x[indices[i], ...].
template <typename T>
Tensor<T> index_select(const Tensor<T>& x, const std::vector<std::size_t>& indices);

/// Concatenates equally shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& xs);

// -- elementwise --------------------------------------------------------------

// Binary ops broadcast with right-aligned extents (an extent of 1 stretches).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> abs(const Tensor<T>& x);
template <typename T>
Tensor<T> square(const Tensor<T>& x);

/// Exact-erf GELU: x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

// -- reductions ---------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// -- linear algebra -----------------------------------------------------------

/// Batched matrix product over the trailing two axes. Leading axes must be
/// equal, or `b` may be a plain matrix shared by every batch slice.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[..., in] * weight[in, out] + bias[out]. `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// -- normalization / activation ------------------------------------------------

/// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Normalizes over the last axis with population variance, then gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

// -- image ops ----------------------------------------------------------------

/// Stride-1 cross-correlation, zero padding, x[B,Cin,H,W], weight[Cout,Cin,kh,kw].
/// `bias` may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t padding);

/// [B, C*S*S, H, W] -> [B, C, S*H, S*W] with
/// out[b][c][h*S+i][w*S+j] = in[b][c*S*S + i*S + j][h][w].
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t factor);

/// Inverse of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t factor);

}  // namespace pft::ops
