#include "pft/fusion.hpp"

#include <cmath>

namespace pft {

template <typename T>
ScamParams<T> ScamParams<T>::mirrored() const {
    ScamParams m;
    m.norm_left = norm_right;
    m.norm_right = norm_left;
    m.t1_left = t1_right;
    m.t1_right = t1_left;
    m.t2_left = t2_right;
    m.t2_right = t2_left;
    m.alpha_left = alpha_right;
    m.alpha_right = alpha_left;
    return m;
}

template <typename T>
PftBlockParams<T> PftBlockParams<T>::mirrored() const {
    PftBlockParams m;
    m.conv = conv;
    for (const auto& layer : layers) m.layers.push_back(layer.mirrored());
    return m;
}

template <typename T>
PftParams<T> mirrored(const PftParams<T>& params) {
    PftParams<T> m;
    for (const auto& block : params) m.push_back(block.mirrored());
    return m;
}

namespace {

// softmax(Q K^T / sqrt(C)) V over rows; q, k, v are [B*H, W, C].
template <typename T>
void row_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, Tensor<T>& scores,
                   Tensor<T>& weights, Tensor<T>& out) {
    const T scale = T(1) / std::sqrt(static_cast<T>(q.dim(2)));
    scores = ops::scale(ops::matmul(q, ops::transpose_last2(k)), scale);
    weights = ops::softmax(scores, 2);
    out = ops::matmul(weights, v);
}

}  // namespace

template <typename T>
ScamOutput<T> scam(const Tensor<T>& left, const Tensor<T>& right, const ScamParams<T>& params) {
    if (left.rank() != 4 || left.shape() != right.shape()) {
        throw ShapeError("scam: left " + shape_str(left.shape()) + " and right " + shape_str(right.shape()) +
                         " must be equal [B,H,W,C]");
    }
    const std::size_t b = left.dim(0), h = left.dim(1), w = left.dim(2), c = left.dim(3);
    const Shape rows{b * h, w, c};

    auto nl = apply_layer_norm(params.norm_left, left);
    auto nr = apply_layer_norm(params.norm_right, right);
    auto ql = ops::reshape(apply_linear(params.t1_left, nl), rows);
    auto qr = ops::reshape(apply_linear(params.t1_right, nr), rows);
    auto vl = ops::reshape(apply_linear(params.t2_left, nl), rows);
    auto vr = ops::reshape(apply_linear(params.t2_right, nr), rows);

    ScamOutput<T> out;
    Tensor<T> f_rl, f_lr;
    row_attention(ql, qr, vr, out.scores_to_left, out.weights_to_left, f_rl);
    row_attention(qr, ql, vl, out.scores_to_right, out.weights_to_right, f_lr);
    out.to_left = ops::reshape(f_rl, left.shape());
    out.to_right = ops::reshape(f_lr, right.shape());
    out.left = ops::add(left, ops::mul(out.to_left, params.alpha_left));
    out.right = ops::add(right, ops::mul(out.to_right, params.alpha_right));
    return out;
}

template <typename T>
ViewPair<T> cvft_forward(const Tensor<T>& left, const Tensor<T>& right, const CvftParams<T>& params) {
    ScamOutput<T> fused = scam(left, right, params.scam);
    auto refine_view = [&](const Tensor<T>& x) {
        return ops::add(x, apply_mlp(params.mlp, apply_layer_norm(params.norm, x)));
    };
    return {refine_view(fused.left), refine_view(fused.right)};
}

template <typename T>
Tensor<T> ivrt_forward(const Tensor<T>& x, const StlParams<T>& params, const WindowSpec& spec) {
    return stl_forward(x, params, spec, 0);
}

template <typename T>
ViewPair<T> pft_layer(const Tensor<T>& left, const Tensor<T>& right, const PftLayerParams<T>& params,
                      const WindowSpec& spec) {
    ViewPair<T> fused = cvft_forward(left, right, params.cvft);
    return {ivrt_forward(fused.left, params.ivrt, spec), ivrt_forward(fused.right, params.ivrt, spec)};
}

template <typename T>
ViewPair<T> pft_block(const Tensor<T>& left, const Tensor<T>& right, const PftBlockParams<T>& params,
                      const WindowSpec& spec) {
    if (left.shape() != right.shape()) {
        throw ShapeError("pft_block: view shapes differ, " + shape_str(left.shape()) + " vs " +
                         shape_str(right.shape()));
    }
    ViewPair<T> t{to_channels_last(left), to_channels_last(right)};
    for (const auto& layer : params.layers) t = pft_layer(t.left, t.right, layer, spec);
    return {ops::add(left, apply_conv(params.conv, to_channels_first(t.left))),
            ops::add(right, apply_conv(params.conv, to_channels_first(t.right)))};
}

template <typename T>
ViewPair<T> pft_forward(const Tensor<T>& left, const Tensor<T>& right, const PftParams<T>& params,
                        const WindowSpec& spec) {
    ViewPair<T> t{left, right};
    for (const auto& block : params) t = pft_block(t.left, t.right, block, spec);
    return t;
}

#define PFT_INSTANTIATE_FUSION(T)                                                                              \
    template struct ScamParams<T>;                                                                             \
    template struct PftBlockParams<T>;                                                                         \
    template PftParams<T> mirrored(const PftParams<T>&);                                                       \
    template ScamOutput<T> scam(const Tensor<T>&, const Tensor<T>&, const ScamParams<T>&);                     \
    template ViewPair<T> cvft_forward(const Tensor<T>&, const Tensor<T>&, const CvftParams<T>&);               \
    template Tensor<T> ivrt_forward(const Tensor<T>&, const StlParams<T>&, const WindowSpec&);                 \
    template ViewPair<T> pft_layer(const Tensor<T>&, const Tensor<T>&, const PftLayerParams<T>&,               \
                                   const WindowSpec&);                                                         \
    template ViewPair<T> pft_block(const Tensor<T>&, const Tensor<T>&, const PftBlockParams<T>&,               \
                                   const WindowSpec&);                                                         \
    template ViewPair<T> pft_forward(const Tensor<T>&, const Tensor<T>&, const PftParams<T>&, const WindowSpec&);

PFT_INSTANTIATE_FUSION(float)
PFT_INSTANTIATE_FUSION(double)

}  // namespace pft
