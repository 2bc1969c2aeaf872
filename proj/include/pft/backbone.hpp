#pragma once

#include <vector>

#include "pft/window_attention.hpp"

// Feature extraction and refinement built from Residual Swin Transformer
// Blocks. Inputs and outputs here are channel-first [B,C,H,W].
namespace pft {

/// STL stack (shift alternating 0, M/2) followed by one 3x3 convolution.
template <typename T>
struct RstbParams {
    std::vector<StlParams<T>> layers;
    Conv2dParams<T> conv;
};

template <typename T>
struct RefineParams {
    std::vector<RstbParams<T>> blocks;
    Conv2dParams<T> conv;
};

/// Shift used by STL number `layer` inside a block: 0 for even, M/2 for odd.
inline std::size_t alternating_shift(std::size_t layer, std::size_t window) {
    return layer % 2 == 0 ? 0 : window / 2;
}

/// One 3x3 convolution from RGB to the embedding dimension.
template <typename T>
Tensor<T> shallow_extract(const Tensor<T>& image, const Conv2dParams<T>& params);

/// y = x + Conv3x3(STL_n(...STL_1(x))).
template <typename T>
Tensor<T> rstb_forward(const Tensor<T>& x, const RstbParams<T>& params, const WindowSpec& spec);

/// Sequential RSTBs.
template <typename T>
Tensor<T> deep_extract(const Tensor<T>& x, const std::vector<RstbParams<T>>& blocks, const WindowSpec& spec);

/// y = Conv3x3(RSTBs(x)) + shallow.
template <typename T>
Tensor<T> refine(const Tensor<T>& x, const RefineParams<T>& params, const Tensor<T>& shallow, const WindowSpec& spec);

}  // namespace pft
