#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pft/fusion.hpp"
#include "pft/image.hpp"

// Brute-force reference implementations, written independently of the
// library kernels and accumulated in double.
namespace pft::testing {

template <typename T>
double oracle_gap(const Tensor<T>& got, const std::vector<double>& want) {
    double m = 0;
    for (std::size_t i = 0; i < want.size(); ++i) m = std::max(m, std::abs(static_cast<double>(got.values()[i]) - want[i]));
    return m;
}

// Dense per-window attention written with explicit loops, accumulating in
// double whatever T is.
template <typename T>
std::vector<double> attention_oracle(const Tensor<T>& windows, const WindowAttentionParams<T>& p, std::size_t window,
                                     std::size_t heads, const Tensor<T>& mask) {
    const std::size_t nw = windows.dim(0), n = windows.dim(1), c = windows.dim(2), d = c / heads;
    const std::size_t span = 2 * window - 1;
    auto lin = [&](const LinearParams<T>& l, const std::vector<double>& x) {
        std::vector<double> y(c);
        for (std::size_t o = 0; o < c; ++o) {
            double s = l.bias.defined() ? static_cast<double>(l.bias.values()[o]) : 0.0;
            for (std::size_t i = 0; i < c; ++i) s += x[i] * static_cast<double>(l.weight.values()[i * c + o]);
            y[o] = s;
        }
        return y;
    };
    std::vector<double> out(nw * n * c);
    for (std::size_t w = 0; w < nw; ++w) {
        std::vector<std::vector<double>> q(n), k(n), v(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> x(c);
            for (std::size_t ch = 0; ch < c; ++ch) x[ch] = static_cast<double>(windows.at({w, i, ch}));
            q[i] = lin(p.q, x);
            k[i] = lin(p.k, x);
            v[i] = lin(p.v, x);
        }
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> concat(c, 0.0);
            for (std::size_t h = 0; h < heads; ++h) {
                std::vector<double> score(n);
                double top = -INFINITY;
                for (std::size_t j = 0; j < n; ++j) {
                    double s = 0;
                    for (std::size_t t = 0; t < d; ++t) s += q[i][h * d + t] * k[j][h * d + t];
                    s /= std::sqrt(static_cast<double>(d));
                    const std::size_t dy = i / window + window - 1 - j / window;
                    const std::size_t dx = i % window + window - 1 - j % window;
                    s += static_cast<double>(p.bias_table.at({dy * span + dx, h}));
                    if (mask.defined()) s += static_cast<double>(mask.at({w % mask.dim(0), i, j}));
                    score[j] = s;
                    top = std::max(top, s);
                }
                double z = 0;
                for (double& s : score) z += (s = std::exp(s - top));
                for (std::size_t j = 0; j < n; ++j)
                    for (std::size_t t = 0; t < d; ++t) concat[h * d + t] += score[j] / z * v[j][h * d + t];
            }
            const auto o = lin(p.proj, concat);
            for (std::size_t ch = 0; ch < c; ++ch) out[(w * n + i) * c + ch] = o[ch];
        }
    }
    return out;
}

struct OracleViews {
    std::vector<double> left, right;
};

// Row-wise cross attention with explicit loops in double.
template <typename T>
OracleViews scam_oracle(const Tensor<T>& xl, const Tensor<T>& xr, const ScamParams<T>& p) {
    const std::size_t b = xl.dim(0), h = xl.dim(1), w = xl.dim(2), c = xl.dim(3);
    auto val = [](const Tensor<T>& t, std::size_t i) { return static_cast<double>(t.values()[i]); };
    auto norm = [&](const Tensor<T>& x, const LayerNormParams<T>& n, std::size_t pix) {
        double mean = 0, var = 0;
        for (std::size_t k = 0; k < c; ++k) mean += val(x, pix * c + k);
        mean /= c;
        for (std::size_t k = 0; k < c; ++k) var += (val(x, pix * c + k) - mean) * (val(x, pix * c + k) - mean);
        var /= c;
        std::vector<double> y(c);
        for (std::size_t k = 0; k < c; ++k)
            y[k] = (val(x, pix * c + k) - mean) / std::sqrt(var + kLayerNormEps) * val(n.gamma, k) + val(n.beta, k);
        return y;
    };
    auto lin = [&](const LinearParams<T>& l, const std::vector<double>& x) {
        std::vector<double> y(c);
        for (std::size_t o = 0; o < c; ++o) {
            y[o] = val(l.bias, o);
            for (std::size_t i = 0; i < c; ++i) y[o] += x[i] * val(l.weight, i * c + o);
        }
        return y;
    };
    OracleViews out{std::vector<double>(xl.numel()), std::vector<double>(xr.numel())};
    auto direction = [&](const Tensor<T>& xq, const Tensor<T>& xkv, const LayerNormParams<T>& nq,
                         const LayerNormParams<T>& nkv, const LinearParams<T>& tq, const LinearParams<T>& tk,
                         const LinearParams<T>& tv, const Tensor<T>& alpha, std::vector<double>& dst) {
        for (std::size_t bi = 0; bi < b; ++bi)
            for (std::size_t y = 0; y < h; ++y) {
                const std::size_t row = (bi * h + y) * w;
                std::vector<std::vector<double>> k(w), v(w);
                for (std::size_t j = 0; j < w; ++j) {
                    const auto n = norm(xkv, nkv, row + j);
                    k[j] = lin(tk, n);
                    v[j] = lin(tv, n);
                }
                for (std::size_t i = 0; i < w; ++i) {
                    const auto q = lin(tq, norm(xq, nq, row + i));
                    std::vector<double> s(w);
                    double top = -INFINITY, z = 0;
                    for (std::size_t j = 0; j < w; ++j) {
                        s[j] = 0;
                        for (std::size_t t = 0; t < c; ++t) s[j] += q[t] * k[j][t];
                        s[j] /= std::sqrt(static_cast<double>(c));
                        top = std::max(top, s[j]);
                    }
                    for (double& e : s) z += (e = std::exp(e - top));
                    for (std::size_t t = 0; t < c; ++t) {
                        double f = 0;
                        for (std::size_t j = 0; j < w; ++j) f += s[j] / z * v[j][t];
                        dst[(row + i) * c + t] = val(alpha, 0) * f + val(xq, (row + i) * c + t);
                    }
                }
            }
    };
    direction(xl, xr, p.norm_left, p.norm_right, p.t1_left, p.t1_right, p.t2_right, p.alpha_left, out.left);
    direction(xr, xl, p.norm_right, p.norm_left, p.t1_right, p.t1_left, p.t2_left, p.alpha_right, out.right);
    return out;
}

inline double ssim_oracle(const Image& a, const Image& b) {
    double g[11][11], total = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) total += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
    const double c1 = 1e-4, c2 = 9e-4;
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y + 11 <= a.height; ++y)
            for (std::size_t x = 0; x + 11 <= a.width; ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const double w = g[i][j] / total, p = a.at(c, y + i, x + j), q = b.at(c, y + i, x + j);
                        ma += w * p;
                        mb += w * q;
                        saa += w * p * p;
                        sbb += w * q * q;
                        sab += w * p * q;
                    }
                saa -= ma * ma;
                sbb -= mb * mb;
                sab -= ma * mb;
                sum += (2 * ma * mb + c1) * (2 * sab + c2) / ((ma * ma + mb * mb + c1) * (saa + sbb + c2));
                ++n;
            }
    return sum / n;
}

}  // namespace pft::testing
