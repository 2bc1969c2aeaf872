#include "pft/backbone.hpp"

namespace pft {

template <typename T>
Tensor<T> shallow_extract(const Tensor<T>& image, const Conv2dParams<T>& params) {
    return apply_conv(params, image);
}

template <typename T>
Tensor<T> rstb_forward(const Tensor<T>& x, const RstbParams<T>& params, const WindowSpec& spec) {
    if (x.rank() != 4) throw ShapeError("rstb_forward: expected [B,C,H,W], got " + shape_str(x.shape()));
    auto t = to_channels_last(x);
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        t = stl_forward(t, params.layers[i], spec, alternating_shift(i, spec.window));
    }
    return ops::add(x, apply_conv(params.conv, to_channels_first(t)));
}

template <typename T>
Tensor<T> deep_extract(const Tensor<T>& x, const std::vector<RstbParams<T>>& blocks, const WindowSpec& spec) {
    Tensor<T> t = x;
    for (const auto& block : blocks) t = rstb_forward(t, block, spec);
    return t;
}

template <typename T>
Tensor<T> refine(const Tensor<T>& x, const RefineParams<T>& params, const Tensor<T>& shallow, const WindowSpec& spec) {
    if (x.shape() != shallow.shape()) {
        throw ShapeError("refine: features " + shape_str(x.shape()) + " do not match shallow features " +
                         shape_str(shallow.shape()));
    }
    return ops::add(apply_conv(params.conv, deep_extract(x, params.blocks, spec)), shallow);
}

#define PFT_INSTANTIATE_BACKBONE(T)                                                                          \
    template Tensor<T> shallow_extract(const Tensor<T>&, const Conv2dParams<T>&);                            \
    template Tensor<T> rstb_forward(const Tensor<T>&, const RstbParams<T>&, const WindowSpec&);              \
    template Tensor<T> deep_extract(const Tensor<T>&, const std::vector<RstbParams<T>>&, const WindowSpec&); \
    template Tensor<T> refine(const Tensor<T>&, const RefineParams<T>&, const Tensor<T>&, const WindowSpec&);

PFT_INSTANTIATE_BACKBONE(float)
PFT_INSTANTIATE_BACKBONE(double)

}  // namespace pft
