#pragma once

#include <vector>

#include "pft/window_attention.hpp"

// Parallax Fusion Transformer: cross-view fusion (CVFT, built on the stereo
// cross attention module SCAM) followed by intra-view refinement (IVRT).
namespace pft {

/// Per-view parameters of the stereo cross attention module.
///
/// t1_left projects the left view both into the query of the right-to-left
/// direction and into the key of the left-to-right direction; t1_right
/// likewise for the right view. t2_* are the value projections.
template <typename T>
struct ScamParams {
    LayerNormParams<T> norm_left, norm_right;
    LinearParams<T> t1_left, t1_right;
    LinearParams<T> t2_left, t2_right;
    Tensor<T> alpha_left, alpha_right;  // [1]

    /// Same parameters with the left/right roles exchanged.
    ScamParams mirrored() const;
};

template <typename T>
struct ScamOutput {
    Tensor<T> left, right;  // Y = alpha * F + X, [B,H,W,C]
    Tensor<T> to_left;      // F_{R->L} before the residual, [B,H,W,C]
    Tensor<T> to_right;     // F_{L->R}
    Tensor<T> scores_to_left, scores_to_right;    // Q K^T / sqrt(C), [B*H, W, W]
    Tensor<T> weights_to_left, weights_to_right;  // row softmax of the scores
};

/// Single-head cross-view attention along epipolar rows. For every (batch,
/// row) the left view's W pixels attend to the right view's W pixels of the
/// same row and vice versa. Inputs are [B,H,W,C].
template <typename T>
ScamOutput<T> scam(const Tensor<T>& left, const Tensor<T>& right, const ScamParams<T>& params);

template <typename T>
struct CvftParams {
    ScamParams<T> scam;
    LayerNormParams<T> norm;  // shared by both views
    MlpParams<T> mlp;         // shared by both views

    CvftParams mirrored() const { return {scam.mirrored(), norm, mlp}; }
};

/// SCAM (its alpha-residual is the stage residual) then x <- x + MLP(LN(x))
/// per view.
template <typename T>
ViewPair<T> cvft_forward(const Tensor<T>& left, const Tensor<T>& right, const CvftParams<T>& params);

/// Regular-partition window transformer applied to one view.
template <typename T>
Tensor<T> ivrt_forward(const Tensor<T>& x, const StlParams<T>& params, const WindowSpec& spec);

template <typename T>
struct PftLayerParams {
    CvftParams<T> cvft;
    StlParams<T> ivrt;  // shared by both views

    PftLayerParams mirrored() const { return {cvft.mirrored(), ivrt}; }
};

template <typename T>
struct PftBlockParams {
    std::vector<PftLayerParams<T>> layers;
    Conv2dParams<T> conv;  // shared by both views

    PftBlockParams mirrored() const;
};

template <typename T>
using PftParams = std::vector<PftBlockParams<T>>;

template <typename T>
PftParams<T> mirrored(const PftParams<T>& params);

/// CVFT then IVRT on each view; channel-last [B,H,W,C] in and out.
template <typename T>
ViewPair<T> pft_layer(const Tensor<T>& left, const Tensor<T>& right, const PftLayerParams<T>& params,
                      const WindowSpec& spec);

/// PFT layers, a per-view 3x3 convolution, and a block residual.
/// Channel-first [B,C,H,W] in and out.
template <typename T>
ViewPair<T> pft_block(const Tensor<T>& left, const Tensor<T>& right, const PftBlockParams<T>& params,
                      const WindowSpec& spec);

/// Sequential PFT blocks; channel-first [B,C,H,W].
template <typename T>
ViewPair<T> pft_forward(const Tensor<T>& left, const Tensor<T>& right, const PftParams<T>& params,
                        const WindowSpec& spec);

}  // namespace pft
