#pragma once

#include <cstdint>
#include <vector>

#include "pft/layers.hpp"

// Swin-style windowed multi-head self-attention and the Swin Transformer
// Layer (STL). Attention-domain tensors are channel-last: [B,H,W,C].
namespace pft {

struct WindowSpec {
    std::size_t window = 8;  // M
    std::size_t heads = 1;
};

/// Additive attention-mask value separating different shift regions.
inline constexpr double kMaskValue = -1e9;

/// Tiling of an H x W map (already padded to multiples of M) into M x M windows.
struct WindowGrid {
    std::size_t window = 1;
    std::size_t height = 0;
    std::size_t width = 0;

    /// Grid over (height, width) rounded up to multiples of `window`.
    static WindowGrid covering(std::size_t height, std::size_t width, std::size_t window);

    std::size_t rows() const { return height / window; }
    std::size_t cols() const { return width / window; }
    std::size_t count() const { return rows() * cols(); }
    std::size_t pixels_per_window() const { return window * window; }
};

/// [B,H,W,C] -> [B*nW, M*M, C]; windows row-major over the grid, pixels
/// row-major inside each window.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, std::size_t window);

/// Inverse of window_partition.
template <typename T>
Tensor<T> window_merge(const Tensor<T>& windows, std::size_t batch, const WindowGrid& grid);

/// Torus roll of a [B,H,W,C] map: out[y][x] = in[(y - dy) mod H][(x - dx) mod W].
template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, std::int64_t dy, std::int64_t dx);

/// M^2 x M^2 indices into the (2M-1)^2-row relative position table.
std::vector<std::size_t> relative_position_index(std::size_t window);

/// Gathers the learnable table [(2M-1)^2, heads] into B[heads, M^2, M^2].
template <typename T>
Tensor<T> relative_position_bias(const Tensor<T>& table, std::size_t window, std::size_t heads);

/// Per-window additive mask [nW, M^2, M^2] for a cyclic shift of `shift`
/// pixels on a padded height x width map. All zeros when shift == 0.
template <typename T>
Tensor<T> build_shift_mask(std::size_t height, std::size_t width, std::size_t window, std::size_t shift);

template <typename T>
struct WindowAttentionParams {
    LinearParams<T> q, k, v, proj;
    Tensor<T> bias_table;  // [(2M-1)^2, heads]
};

/// Multi-head attention inside each window. `windows` is [nW_total, M^2, C];
/// `mask` is undefined or [nW, M^2, M^2] with nW dividing nW_total.
template <typename T>
Tensor<T> window_msa(const Tensor<T>& windows, const WindowAttentionParams<T>& params, const WindowSpec& spec,
                     const Tensor<T>& mask);

/// Post-softmax attention weights [nW_total, heads, M^2, M^2] of window_msa.
template <typename T>
Tensor<T> window_attention_weights(const Tensor<T>& windows, const WindowAttentionParams<T>& params,
                                   const WindowSpec& spec, const Tensor<T>& mask);

template <typename T>
struct StlParams {
    LayerNormParams<T> norm1;
    WindowAttentionParams<T> attn;
    LayerNormParams<T> norm2;
    MlpParams<T> mlp;
};

/// Pre-norm Swin layer on [B,H,W,C]:
///   x <- x + MSA(LN(x))   (cyclic shift by -shift around the MSA when shift > 0)
///   x <- x + MLP(LN(x))
/// H and W are zero-padded to multiples of M inside and cropped after.
template <typename T>
Tensor<T> stl_forward(const Tensor<T>& x, const StlParams<T>& params, const WindowSpec& spec, std::size_t shift);

}  // namespace pft
