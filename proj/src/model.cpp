#include "pft/model.hpp"

#include <cmath>
#include <random>

namespace pft {

namespace {

/// Walks the network structure once, asking `param(name, shape, init)` for
/// each tensor. Shared by layout listing, initialization and binding so the
/// three can never disagree on names or order.
template <typename T, typename ParamFn>
ModelParams<T> declare(const ModelConfig& cfg, ParamFn&& param) {
    const std::size_t c = cfg.embed_dim;
    const std::size_t span = 2 * cfg.window - 1;

    auto linear = [&](const std::string& prefix, std::size_t in, std::size_t out, bool bias) {
        LinearParams<T> p;
        p.weight = param(prefix + ".weight", Shape{in, out}, InitKind::kWeight);
        if (bias) p.bias = param(prefix + ".bias", Shape{out}, InitKind::kZero);
        return p;
    };
    auto norm = [&](const std::string& prefix) {
        return LayerNormParams<T>{param(prefix + ".gamma", Shape{c}, InitKind::kOne),
                                  param(prefix + ".beta", Shape{c}, InitKind::kZero)};
    };
    auto conv = [&](const std::string& prefix, std::size_t in, std::size_t out) {
        return Conv2dParams<T>{param(prefix + ".weight", Shape{out, in, 3, 3}, InitKind::kWeight),
                               param(prefix + ".bias", Shape{out}, InitKind::kZero)};
    };
    auto mlp = [&](const std::string& prefix) {
        return MlpParams<T>{linear(prefix + ".fc1", c, c * cfg.mlp_ratio, true),
                            linear(prefix + ".fc2", c * cfg.mlp_ratio, c, true)};
    };
    auto stl = [&](const std::string& prefix) {
        StlParams<T> p;
        p.norm1 = norm(prefix + ".norm1");
        p.attn.q = linear(prefix + ".attn.q", c, c, cfg.qkv_bias);
        p.attn.k = linear(prefix + ".attn.k", c, c, cfg.qkv_bias);
        p.attn.v = linear(prefix + ".attn.v", c, c, cfg.qkv_bias);
        p.attn.bias_table = param(prefix + ".attn.bias_table", Shape{span * span, cfg.heads}, InitKind::kZero);
        p.attn.proj = linear(prefix + ".attn.proj", c, c, true);
        p.norm2 = norm(prefix + ".norm2");
        p.mlp = mlp(prefix + ".mlp");
        return p;
    };
    auto rstb = [&](const std::string& prefix) {
        RstbParams<T> p;
        for (std::size_t i = 0; i < cfg.stl_per_rstb; ++i) p.layers.push_back(stl(prefix + ".stl." + std::to_string(i)));
        p.conv = conv(prefix + ".conv", c, c);
        return p;
    };

    ModelParams<T> m;
    m.shallow = conv("shallow", 3, c);
    for (std::size_t i = 0; i < cfg.rstb_count; ++i) m.deep.push_back(rstb("deep." + std::to_string(i)));

    for (std::size_t b = 0; b < cfg.pft_blocks; ++b) {
        const std::string bp = "fusion." + std::to_string(b);
        PftBlockParams<T> block;
        for (std::size_t l = 0; l < cfg.pft_layers_per_block; ++l) {
            const std::string lp = bp + ".layer." + std::to_string(l);
            PftLayerParams<T> layer;
            ScamParams<T>& s = layer.cvft.scam;
            s.norm_left = norm(lp + ".cvft.scam.norm_left");
            s.norm_right = norm(lp + ".cvft.scam.norm_right");
            s.t1_left = linear(lp + ".cvft.scam.t1_left", c, c, true);
            s.t1_right = linear(lp + ".cvft.scam.t1_right", c, c, true);
            s.t2_left = linear(lp + ".cvft.scam.t2_left", c, c, true);
            s.t2_right = linear(lp + ".cvft.scam.t2_right", c, c, true);
            s.alpha_left = param(lp + ".cvft.scam.alpha_left", Shape{1}, InitKind::kZero);
            s.alpha_right = param(lp + ".cvft.scam.alpha_right", Shape{1}, InitKind::kZero);
            layer.cvft.norm = norm(lp + ".cvft.norm");
            layer.cvft.mlp = mlp(lp + ".cvft.mlp");
            layer.ivrt = stl(lp + ".ivrt");
            block.layers.push_back(std::move(layer));
        }
        block.conv = conv(bp + ".conv", c, c);
        m.fusion.push_back(std::move(block));
    }

    for (std::size_t i = 0; i < cfg.refine_rstb_count; ++i) m.refine.blocks.push_back(rstb("refine." + std::to_string(i)));
    m.refine.conv = conv("refine.conv", c, c);
    m.reconstruct = conv("reconstruct", c, 3 * cfg.scale * cfg.scale);
    return m;
}

}  // namespace

std::vector<ParameterSpec> parameter_layout(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<ParameterSpec> layout;
    declare<float>(cfg, [&](const std::string& name, Shape shape, InitKind init) {
        layout.push_back(ParameterSpec{name, std::move(shape), init});
        return Tensor<float>();
    });
    return layout;
}

template <typename T>
Model<T> Model<T>::build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    constexpr double kStd = 0.02;

    Model m;
    m.cfg_ = cfg;
    m.params_ = declare<T>(cfg, [&](const std::string& name, Shape shape, InitKind init) {
        Tensor<T> t(std::move(shape));
        auto v = t.mutable_values();
        switch (init) {
            case InitKind::kZero:
                break;
            case InitKind::kOne:
                std::fill(v.begin(), v.end(), T(1));
                break;
            case InitKind::kWeight:
                for (T& x : v) {
                    double z;
                    do z = normal(rng);
                    while (std::abs(z) > 2.0);
                    x = static_cast<T>(z * kStd);
                }
                break;
        }
        m.store_.add(name, t);
        return t;
    });
    return m;
}

template <typename T>
void check_layout(const ParameterStore<T>& store, const ModelConfig& cfg) {
    const auto layout = parameter_layout(cfg);
    const auto entries = store.entries();
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (i >= entries.size()) throw FormatError("weights are missing parameter " + layout[i].name);
        if (entries[i].name != layout[i].name) {
            throw FormatError("weight entry " + std::to_string(i) + " is " + entries[i].name + ", expected " +
                              layout[i].name);
        }
        if (entries[i].tensor.shape() != layout[i].shape) {
            throw FormatError("shape mismatch for " + layout[i].name + ": file has " +
                              shape_str(entries[i].tensor.shape()) + ", config expects " +
                              shape_str(layout[i].shape));
        }
    }
    if (entries.size() != layout.size()) {
        throw FormatError("weights contain " + std::to_string(entries.size() - layout.size()) +
                          " unexpected extra parameter(s), first " + entries[layout.size()].name);
    }
}

template <typename T>
Model<T> Model<T>::from_store(const ModelConfig& cfg, ParameterStore<T> store) {
    check_layout(store, cfg);
    Model m;
    m.cfg_ = cfg;
    m.store_ = std::move(store);
    m.params_ = declare<T>(cfg, [&](const std::string& name, const Shape&, InitKind) { return m.store_.get(name); });
    return m;
}

template <typename T>
ViewPair<T> Model<T>::forward(const Tensor<T>& left, const Tensor<T>& right) const {
    if (left.rank() != 4 || left.dim(1) != 3 || left.shape() != right.shape()) {
        throw ShapeError("forward: expected two equal [B,3,H,W] inputs, got " + shape_str(left.shape()) + " and " +
                         shape_str(right.shape()));
    }
    const WindowSpec spec = cfg_.window_spec();
    auto shallow_l = shallow_extract(left, params_.shallow);
    auto shallow_r = shallow_extract(right, params_.shallow);
    auto deep_l = deep_extract(shallow_l, params_.deep, spec);
    auto deep_r = deep_extract(shallow_r, params_.deep, spec);
    ViewPair<T> fused = pft_forward(deep_l, deep_r, params_.fusion, spec);
    auto reconstruct = [&](const Tensor<T>& features, const Tensor<T>& shallow) {
        auto refined = refine(features, params_.refine, shallow, spec);
        return ops::pixel_shuffle(apply_conv(params_.reconstruct, refined), cfg_.scale);
    };
    return {reconstruct(fused.left, shallow_l), reconstruct(fused.right, shallow_r)};
}

template <typename T>
ParameterStore<T> load_weights(const std::string& path, const ModelConfig& cfg) {
    ParameterStore<T> store = read_weights<T>(path);
    check_layout(store, cfg);
    return store;
}

template class Model<float>;
template class Model<double>;
template ParameterStore<float> load_weights(const std::string&, const ModelConfig&);
template ParameterStore<double> load_weights(const std::string&, const ModelConfig&);
template void check_layout(const ParameterStore<float>&, const ModelConfig&);
template void check_layout(const ParameterStore<double>&, const ModelConfig&);

}  // namespace pft
