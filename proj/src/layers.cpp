#include "pft/layers.hpp"

namespace pft {

template <typename T>
Tensor<T> to_channels_last(const Tensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("to_channels_last: expected [B,C,H,W], got " + shape_str(x.shape()));
    return ops::permute(x, {0, 2, 3, 1});
}

template <typename T>
Tensor<T> to_channels_first(const Tensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("to_channels_first: expected [B,H,W,C], got " + shape_str(x.shape()));
    return ops::permute(x, {0, 3, 1, 2});
}

template Tensor<float> to_channels_last(const Tensor<float>&);
template Tensor<double> to_channels_last(const Tensor<double>&);
template Tensor<float> to_channels_first(const Tensor<float>&);
template Tensor<double> to_channels_first(const Tensor<double>&);

}  // namespace pft
