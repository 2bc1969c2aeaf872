#include "pft/window_attention.hpp"

#include <cmath>

namespace pft {

WindowGrid WindowGrid::covering(std::size_t height, std::size_t width, std::size_t window) {
    if (window == 0) throw ShapeError("window grid: window size must be >= 1");
    auto up = [window](std::size_t v) { return (v + window - 1) / window * window; };
    return WindowGrid{window, up(height), up(width)};
}

template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, std::size_t window) {
    if (x.rank() != 4) throw ShapeError("window_partition: expected [B,H,W,C], got " + shape_str(x.shape()));
    const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (window == 0 || h % window != 0 || w % window != 0) {
        throw ShapeError("window_partition: " + shape_str(x.shape()) + " not divisible by window " +
                         std::to_string(window));
    }
    auto t = ops::reshape(x, {b, h / window, window, w / window, window, c});
    t = ops::permute(t, {0, 1, 3, 2, 4, 5});
    return ops::reshape(t, {b * (h / window) * (w / window), window * window, c});
}

template <typename T>
Tensor<T> window_merge(const Tensor<T>& windows, std::size_t batch, const WindowGrid& grid) {
    const std::size_t m = grid.window;
    if (windows.rank() != 3 || windows.dim(0) != batch * grid.count() || windows.dim(1) != m * m) {
        throw ShapeError("window_merge: " + shape_str(windows.shape()) + " does not match a " +
                         std::to_string(batch) + "x" + std::to_string(grid.height) + "x" +
                         std::to_string(grid.width) + " map with window " + std::to_string(m));
    }
    const std::size_t c = windows.dim(2);
    auto t = ops::reshape(windows, {batch, grid.rows(), grid.cols(), m, m, c});
    t = ops::permute(t, {0, 1, 3, 2, 4, 5});
    return ops::reshape(t, {batch, grid.height, grid.width, c});
}

template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, std::int64_t dy, std::int64_t dx) {
    if (x.rank() != 4) throw ShapeError("cyclic_shift: expected [B,H,W,C], got " + shape_str(x.shape()));
    Tensor<T> out = x;
    if (dy != 0) out = ops::roll(out, 1, dy);
    if (dx != 0) out = ops::roll(out, 2, dx);
    return out;
}

std::vector<std::size_t> relative_position_index(std::size_t window) {
    const std::size_t n = window * window;
    const std::size_t span = 2 * window - 1;
    std::vector<std::size_t> index(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t yi = i / window, xi = i % window;
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t yj = j / window, xj = j % window;
            index[i * n + j] = (yi + window - 1 - yj) * span + (xi + window - 1 - xj);
        }
    }
    return index;
}

template <typename T>
Tensor<T> relative_position_bias(const Tensor<T>& table, std::size_t window, std::size_t heads) {
    const std::size_t span = 2 * window - 1;
    if (table.shape() != Shape{span * span, heads}) {
        throw ShapeError("relative_position_bias: table " + shape_str(table.shape()) + " expected " +
                         shape_str({span * span, heads}));
    }
    const std::size_t n = window * window;
    auto gathered = ops::index_select(table, relative_position_index(window));  // [N*N, heads]
    return ops::permute(ops::reshape(gathered, {n, n, heads}), {2, 0, 1});
}

template <typename T>
Tensor<T> build_shift_mask(std::size_t height, std::size_t width, std::size_t window, std::size_t shift) {
    if (window == 0 || height % window != 0 || width % window != 0) {
        throw ShapeError("build_shift_mask: map " + std::to_string(height) + "x" + std::to_string(width) +
                         " not divisible by window " + std::to_string(window));
    }
    if (shift >= window) throw ShapeError("build_shift_mask: shift must be smaller than the window");
    const WindowGrid grid{window, height, width};
    const std::size_t n = window * window;
    Tensor<T> mask(Shape{grid.count(), n, n});
    if (shift == 0) return mask;

    // Region id per pixel of the shifted map: bands [0, L-M), [L-M, L-shift), [L-shift, L).
    auto band = [&](std::size_t v, std::size_t extent) -> std::size_t {
        if (v < extent - window) return 0;
        if (v < extent - shift) return 1;
        return 2;
    };
    std::vector<std::size_t> labels(n);
    auto mv = mask.mutable_values();
    for (std::size_t wy = 0; wy < grid.rows(); ++wy) {
        for (std::size_t wx = 0; wx < grid.cols(); ++wx) {
            for (std::size_t p = 0; p < n; ++p) {
                const std::size_t y = wy * window + p / window;
                const std::size_t x = wx * window + p % window;
                labels[p] = band(y, height) * 3 + band(x, width);
            }
            T* block = mv.data() + (wy * grid.cols() + wx) * n * n;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    block[i * n + j] = labels[i] == labels[j] ? T(0) : static_cast<T>(kMaskValue);
        }
    }
    return mask;
}

namespace {

struct AttentionParts {
    std::size_t windows, tokens, channels, head_dim;
};

template <typename T>
AttentionParts check_attention(const Tensor<T>& x, const WindowSpec& spec, const Tensor<T>& mask) {
    if (x.rank() != 3) throw ShapeError("window_msa: expected [nW, M*M, C], got " + shape_str(x.shape()));
    const std::size_t nw = x.dim(0), n = x.dim(1), c = x.dim(2);
    if (spec.heads == 0 || c % spec.heads != 0) {
        throw ShapeError("window_msa: " + std::to_string(c) + " channels not divisible by " +
                         std::to_string(spec.heads) + " heads");
    }
    if (n != spec.window * spec.window) {
        throw ShapeError("window_msa: " + std::to_string(n) + " tokens per window, expected M*M = " +
                         std::to_string(spec.window * spec.window));
    }
    if (mask.defined()) {
        if (mask.rank() != 3 || mask.dim(1) != n || mask.dim(2) != n || mask.dim(0) == 0 || nw % mask.dim(0) != 0) {
            throw ShapeError("window_msa: mask " + shape_str(mask.shape()) + " incompatible with " +
                             std::to_string(nw) + " windows of " + std::to_string(n) + " tokens");
        }
    }
    return {nw, n, c, c / spec.heads};
}

// [nW, N, C] -> [nW, heads, N, d]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, const AttentionParts& a, std::size_t heads) {
    return ops::permute(ops::reshape(x, {a.windows, a.tokens, heads, a.head_dim}), {0, 2, 1, 3});
}

template <typename T>
Tensor<T> attention_probs(const Tensor<T>& x, const WindowAttentionParams<T>& p, const WindowSpec& spec,
                          const Tensor<T>& mask, const AttentionParts& a, Tensor<T>* values_out) {
    auto q = split_heads(apply_linear(p.q, x), a, spec.heads);
    auto k = split_heads(apply_linear(p.k, x), a, spec.heads);
    *values_out = split_heads(apply_linear(p.v, x), a, spec.heads);

    const T scale = T(1) / std::sqrt(static_cast<T>(a.head_dim));
    auto scores = ops::scale(ops::matmul(q, ops::transpose_last2(k)), scale);  // [nW, h, N, N]
    scores = ops::add(scores, relative_position_bias(p.bias_table, spec.window, spec.heads));
    if (mask.defined()) {
        const std::size_t per_image = mask.dim(0);
        auto grouped = ops::reshape(scores, {a.windows / per_image, per_image, spec.heads, a.tokens, a.tokens});
        auto m = ops::reshape(mask, {per_image, 1, a.tokens, a.tokens});
        scores = ops::reshape(ops::add(grouped, m), {a.windows, spec.heads, a.tokens, a.tokens});
    }
    return ops::softmax(scores, 3);
}

}  // namespace

template <typename T>
Tensor<T> window_msa(const Tensor<T>& windows, const WindowAttentionParams<T>& params, const WindowSpec& spec,
                     const Tensor<T>& mask) {
    const AttentionParts a = check_attention(windows, spec, mask);
    Tensor<T> v;
    auto probs = attention_probs(windows, params, spec, mask, a, &v);
    auto heads_out = ops::matmul(probs, v);                                                 // [nW, h, N, d]
    auto merged = ops::reshape(ops::permute(heads_out, {0, 2, 1, 3}), {a.windows, a.tokens, a.channels});
    return apply_linear(params.proj, merged);
}

template <typename T>
Tensor<T> window_attention_weights(const Tensor<T>& windows, const WindowAttentionParams<T>& params,
                                   const WindowSpec& spec, const Tensor<T>& mask) {
    const AttentionParts a = check_attention(windows, spec, mask);
    Tensor<T> v;
    return attention_probs(windows, params, spec, mask, a, &v);
}

template <typename T>
Tensor<T> stl_forward(const Tensor<T>& x, const StlParams<T>& params, const WindowSpec& spec, std::size_t shift) {
    if (x.rank() != 4) throw ShapeError("stl_forward: expected [B,H,W,C], got " + shape_str(x.shape()));
    const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2);
    const WindowGrid grid = WindowGrid::covering(h, w, spec.window);

    auto t = apply_layer_norm(params.norm1, x);
    if (grid.height != h) t = ops::pad(t, 1, 0, grid.height - h);
    if (grid.width != w) t = ops::pad(t, 2, 0, grid.width - w);

    Tensor<T> mask;
    const auto s = static_cast<std::int64_t>(shift);
    if (shift > 0) {
        t = cyclic_shift(t, -s, -s);
        mask = build_shift_mask<T>(grid.height, grid.width, spec.window, shift);
    }
    auto attended = window_msa(window_partition(t, spec.window), params.attn, spec, mask);
    t = window_merge(attended, b, grid);
    if (shift > 0) t = cyclic_shift(t, s, s);
    if (grid.height != h) t = ops::narrow(t, 1, 0, h);
    if (grid.width != w) t = ops::narrow(t, 2, 0, w);

    auto y = ops::add(x, t);
    return ops::add(y, apply_mlp(params.mlp, apply_layer_norm(params.norm2, y)));
}

#define PFT_INSTANTIATE_WINDOW(T)                                                                           \
    template Tensor<T> window_partition(const Tensor<T>&, std::size_t);                                     \
    template Tensor<T> window_merge(const Tensor<T>&, std::size_t, const WindowGrid&);                      \
    template Tensor<T> cyclic_shift(const Tensor<T>&, std::int64_t, std::int64_t);                          \
    template Tensor<T> relative_position_bias(const Tensor<T>&, std::size_t, std::size_t);                  \
    template Tensor<T> build_shift_mask<T>(std::size_t, std::size_t, std::size_t, std::size_t);             \
    template Tensor<T> window_msa(const Tensor<T>&, const WindowAttentionParams<T>&, const WindowSpec&,     \
                                  const Tensor<T>&);                                                        \
    template Tensor<T> window_attention_weights(const Tensor<T>&, const WindowAttentionParams<T>&,          \
                                                const WindowSpec&, const Tensor<T>&);                       \
    template Tensor<T> stl_forward(const Tensor<T>&, const StlParams<T>&, const WindowSpec&, std::size_t);

PFT_INSTANTIATE_WINDOW(float)
PFT_INSTANTIATE_WINDOW(double)

}  // namespace pft
