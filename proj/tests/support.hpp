#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "pft/image.hpp"
#include "pft/model.hpp"

namespace pft::testing {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<T> t(std::move(shape));
    for (T& v : t.mutable_values()) v = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.numel() * sizeof(T)) == 0;
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline bool is_norm_param(const std::string& name) { return ends_with(name, ".gamma") || ends_with(name, ".beta"); }

/// Build weights with every tensor perturbed by N(0, stddev^2).
template <typename T>
Model<T> random_model(const ModelConfig& cfg, std::uint64_t seed, double stddev = 0.1) {
    Model<T> m = Model<T>::build(cfg, seed);
    std::mt19937_64 rng(seed + 17);
    std::normal_distribution<double> normal(0.0, stddev);
    for (auto& e : m.parameters().entries())
        for (T& v : e.tensor.mutable_values()) v = static_cast<T>(static_cast<double>(v) + normal(rng));
    return m;
}

/// Every projection, convolution, bias table and residual scale zero; layer
/// norm affine parameters random so normalization is still exercised.
template <typename T>
Model<T> zero_model(const ModelConfig& cfg, std::uint64_t seed) {
    Model<T> m = random_model<T>(cfg, seed, 0.5);
    for (auto& e : m.parameters().entries()) {
        if (is_norm_param(e.name)) continue;
        auto v = e.tensor.mutable_values();
        std::fill(v.begin(), v.end(), T(0));
    }
    return m;
}

inline ModelConfig small_config(std::size_t c, std::size_t window, std::size_t heads) {
    ModelConfig cfg = ModelConfig::toy();
    cfg.embed_dim = c;
    cfg.window = window;
    cfg.heads = heads;
    return cfg;
}

/// Smooth synthetic scene: shaded background, a soft disc and a mild
/// texture. `disparity` shifts the scene horizontally (nearer disc moves
/// further), mimicking a rectified stereo view.
inline Image synthetic_view(std::size_t h, std::size_t w, double disparity) {
    Image im(h, w);
    const double n = static_cast<double>(std::max(h, w));
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double xs = static_cast<double>(x) + disparity;
            const double u = xs / n, v = static_cast<double>(y) / n;
            const double base[3] = {0.2 + 0.5 * u, 0.3 + 0.4 * v, 0.6 - 0.3 * u * v};
            const double dx = static_cast<double>(x) + 1.5 * disparity - 0.55 * n;
            const double dy = static_cast<double>(y) - 0.45 * n;
            const double disc = 1.0 / (1.0 + std::exp((std::sqrt(dx * dx + dy * dy) - 0.22 * n) * 1.2));
            const double tex = 0.08 * std::sin(0.7 * xs) * std::cos(0.5 * static_cast<double>(y));
            const double colour[3] = {0.85, 0.25, 0.15};
            for (std::size_t c = 0; c < 3; ++c) {
                im.at(c, y, x) = static_cast<float>(std::clamp(base[c] * (1 - disc) + colour[c] * disc + tex, 0.0, 1.0));
            }
        }
    }
    return im;
}

inline StereoPair synthetic_pair(std::size_t h, std::size_t w) {
    return {synthetic_view(h, w, 0.0), synthetic_view(h, w, 3.0)};
}

inline Image random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    Image im(h, w);
    for (float& v : im.values) v = dist(rng);
    return im;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path fresh_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("pft_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace pft::testing
