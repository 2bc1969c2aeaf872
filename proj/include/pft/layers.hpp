#pragma once

#include "pft/ops.hpp"

namespace pft {

template <typename T>
struct LinearParams {
    Tensor<T> weight;  // [in, out]
    Tensor<T> bias;    // [out], may be undefined
};

template <typename T>
struct LayerNormParams {
    Tensor<T> gamma;
    Tensor<T> beta;
};

template <typename T>
struct Conv2dParams {
    Tensor<T> weight;  // [out, in, k, k]
    Tensor<T> bias;    // [out]
};

/// Two-layer perceptron with GELU between the layers.
template <typename T>
struct MlpParams {
    LinearParams<T> fc1;
    LinearParams<T> fc2;
};

/// Left/right views of one stereo quantity.
template <typename T>
struct ViewPair {
    Tensor<T> left;
    Tensor<T> right;
};

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
Tensor<T> apply_linear(const LinearParams<T>& p, const Tensor<T>& x) {
    return ops::linear(x, p.weight, p.bias);
}

template <typename T>
Tensor<T> apply_layer_norm(const LayerNormParams<T>& p, const Tensor<T>& x) {
    return ops::layer_norm(x, p.gamma, p.beta, static_cast<T>(kLayerNormEps));
}

/// Same-size 3x3 (or any odd k) convolution.
template <typename T>
Tensor<T> apply_conv(const Conv2dParams<T>& p, const Tensor<T>& x) {
    return ops::conv2d(x, p.weight, p.bias, p.weight.dim(2) / 2);
}

template <typename T>
Tensor<T> apply_mlp(const MlpParams<T>& p, const Tensor<T>& x) {
    return apply_linear(p.fc2, ops::gelu(apply_linear(p.fc1, x)));
}

/// [B,C,H,W] -> [B,H,W,C]
template <typename T>
Tensor<T> to_channels_last(const Tensor<T>& x);

/// [B,H,W,C] -> [B,C,H,W]
template <typename T>
Tensor<T> to_channels_first(const Tensor<T>& x);

}  // namespace pft
