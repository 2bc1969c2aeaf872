#include "pft/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace pft::ops {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

using Index = std::ptrdiff_t;

template <typename T>
using Sinks = std::span<std::vector<T>* const>;

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

/// Calls fn(out_linear_index, multi_index) for every index of `shape` in
/// row-major order.
template <typename Fn>
void for_each_index(const Shape& shape, Fn&& fn) {
    const std::size_t n = shape_numel(shape);
    std::vector<std::size_t> idx(shape.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        fn(i, idx);
        for (std::size_t d = shape.size(); d-- > 0;) {
            if (++idx[d] < shape[d]) break;
            idx[d] = 0;
        }
    }
}

/// Output element i takes x[map[i]], or zero when map[i] == kNone. Used for
/// every pure data-movement op; the backward pass scatters along the same map.
template <typename T>
Tensor<T> gather(std::string_view op, const Tensor<T>& x, Shape out_shape, std::vector<std::size_t> map) {
    std::vector<T> out(map.size());
    auto xv = x.values();
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = map[i] == kNone ? T(0) : xv[map[i]];
    Tensor<T> result(std::move(out_shape), std::move(out));
    if (auto* tape = recording_tape({&x})) {
        tape->record(op, result, {x}, [map = std::move(map)](std::span<const T> g, Sinks<T> gin) {
            std::vector<T>& gx = *gin[0];
            for (std::size_t i = 0; i < map.size(); ++i) {
                if (map[i] != kNone) gx[map[i]] += g[i];
            }
        });
    }
    return result;
}

struct Broadcast {
    Shape out;
    std::vector<std::size_t> a_strides;
    std::vector<std::size_t> b_strides;
};

Broadcast broadcast_shapes(const char* op, const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Broadcast r;
    r.out.assign(rank, 1);
    r.a_strides.assign(rank, 0);
    r.b_strides.assign(rank, 0);
    auto sa = row_major_strides(a);
    auto sb = row_major_strides(b);
    for (std::size_t d = 0; d < rank; ++d) {
        const std::size_t oa = rank - a.size();
        const std::size_t ob = rank - b.size();
        const std::size_t ea = d >= oa ? a[d - oa] : 1;
        const std::size_t eb = d >= ob ? b[d - ob] : 1;
        if (ea != eb && ea != 1 && eb != 1) {
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        r.out[d] = std::max(ea, eb);
        if (d >= oa && ea != 1) r.a_strides[d] = sa[d - oa];
        if (d >= ob && eb != 1) r.b_strides[d] = sb[d - ob];
    }
    return r;
}

enum class BinaryKind { kAdd, kSub, kMul };

template <typename T>
Tensor<T> binary(BinaryKind kind, const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    auto av = a.values();
    auto bv = b.values();
    auto apply = [kind](T x, T y) {
        switch (kind) {
            case BinaryKind::kAdd: return x + y;
            case BinaryKind::kSub: return x - y;
            case BinaryKind::kMul: return x * y;
        }
        return T(0);
    };

    const bool same = a.shape() == b.shape();
    Shape out_shape;
    std::vector<std::size_t> ia, ib;  // source offsets, empty on the same-shape path
    std::vector<T> out;
    if (same) {
        out_shape = a.shape();
        out.resize(av.size());
        for (std::size_t i = 0; i < av.size(); ++i) out[i] = apply(av[i], bv[i]);
    } else {
        Broadcast bc = broadcast_shapes(op, a.shape(), b.shape());
        out_shape = bc.out;
        const std::size_t n = shape_numel(bc.out);
        ia.resize(n);
        ib.resize(n);
        out.resize(n);
        for_each_index(bc.out, [&](std::size_t i, const std::vector<std::size_t>& idx) {
            std::size_t oa = 0, ob = 0;
            for (std::size_t d = 0; d < idx.size(); ++d) {
                oa += idx[d] * bc.a_strides[d];
                ob += idx[d] * bc.b_strides[d];
            }
            ia[i] = oa;
            ib[i] = ob;
            out[i] = apply(av[oa], bv[ob]);
        });
    }

    Tensor<T> result(std::move(out_shape), std::move(out));
    if (auto* tape = recording_tape({&a, &b})) {
        tape->record(op, result, {a, b},
                     [kind, a, b, ia = std::move(ia), ib = std::move(ib)](std::span<const T> g, Sinks<T> gin) {
                         const bool direct = ia.empty();
                         auto av = a.values();
                         auto bv = b.values();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                             const std::size_t oa = direct ? i : ia[i];
                             const std::size_t ob = direct ? i : ib[i];
                             T da = g[i], db = g[i];
                             if (kind == BinaryKind::kSub) db = -g[i];
                             if (kind == BinaryKind::kMul) {
                                 da = g[i] * bv[ob];
                                 db = g[i] * av[oa];
                             }
                             if (gin[0]) (*gin[0])[oa] += da;
                             if (gin[1]) (*gin[1])[ob] += db;
                         }
                     });
    }
    return result;
}

template <typename T>
Tensor<T> unary(std::string_view op, const Tensor<T>& x, T (*f)(T), T (*df)(T)) {
    auto xv = x.values();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    Tensor<T> result(x.shape(), std::move(out));
    if (auto* tape = recording_tape({&x})) {
        tape->record(op, result, {x}, [x, df](std::span<const T> g, Sinks<T> gin) {
            auto xv = x.values();
            std::vector<T>& gx = *gin[0];
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i]);
        });
    }
    return result;
}

template <typename T>
T gelu_value(T x) {
    return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
    const T pdf = std::exp(T(-0.5) * x * x) * (std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>);
    return cdf + x * pdf;
}

// Row-major GEMM kernels over one batch slice; accumulation order over the
// contracted index is fixed, so outputs do not depend on the worker count.

template <typename T>
void gemm_rows(const T* a, const T* b, T* out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        T* o = out + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            const T* br = b + p * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
        }
    }
}

// ga[i,p] += sum_j g[i,j] * b[p,j]
template <typename T>
void gemm_grad_a(const T* g, const T* b, T* ga, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* gr = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T* br = b + p * n;
            T s = 0;
            for (std::size_t j = 0; j < n; ++j) s += gr[j] * br[j];
            ga[i * k + p] += s;
        }
    }
}

}  // namespace

// -- shape --------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    Tensor<T> result(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()));
    if (auto* tape = recording_tape({&x})) {
        tape->record("reshape", result, {x}, [](std::span<const T> g, Sinks<T> gin) {
            std::vector<T>& gx = *gin[0];
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    }
    return result;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
    const Shape& in = x.shape();
    if (axes.size() != in.size()) throw ShapeError("permute: axis count does not match rank of " + shape_str(in));
    std::vector<bool> seen(in.size(), false);
    Shape out_shape(in.size());
    for (std::size_t i = 0; i < axes.size(); ++i) {
        if (axes[i] >= in.size() || seen[axes[i]]) throw ShapeError("permute: invalid axis order");
        seen[axes[i]] = true;
        out_shape[i] = in[axes[i]];
    }
    auto in_strides = row_major_strides(in);
    std::vector<std::size_t> src_strides(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) src_strides[i] = in_strides[axes[i]];

    std::vector<std::size_t> map(x.numel());
    for_each_index(out_shape, [&](std::size_t i, const std::vector<std::size_t>& idx) {
        std::size_t off = 0;
        for (std::size_t d = 0; d < idx.size(); ++d) off += idx[d] * src_strides[d];
        map[i] = off;
    });
    return gather("permute", x, std::move(out_shape), std::move(map));
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
    if (x.rank() < 2) throw ShapeError("transpose_last2: rank < 2 for " + shape_str(x.shape()));
    std::vector<std::size_t> axes(x.rank());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
    return permute(x, axes);
}

namespace {

// Views x as [outer, n, inner] around `axis`.
struct AxisSplit {
    std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t d = 0; d < axis; ++d) r.outer *= s[d];
    r.n = s[axis];
    for (std::size_t d = axis + 1; d < s.size(); ++d) r.inner *= s[d];
    return r;
}

}  // namespace

template <typename T>
Tensor<T> pad(const Tensor<T>& x, std::size_t axis, std::size_t before, std::size_t after) {
    if (axis >= x.rank()) throw ShapeError("pad: axis out of range for " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    out_shape[axis] += before + after;
    const AxisSplit in = split_at(x.shape(), axis);
    const std::size_t n_out = out_shape[axis];
    std::vector<std::size_t> map(shape_numel(out_shape), kNone);
    for (std::size_t o = 0; o < in.outer; ++o)
        for (std::size_t i = 0; i < in.n; ++i)
            for (std::size_t r = 0; r < in.inner; ++r)
                map[(o * n_out + i + before) * in.inner + r] = (o * in.n + i) * in.inner + r;
    return gather("pad", x, std::move(out_shape), std::move(map));
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= x.rank() || start + length > x.dim(axis)) {
        throw ShapeError("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside axis of " + shape_str(x.shape()));
    }
    Shape out_shape = x.shape();
    out_shape[axis] = length;
    const AxisSplit in = split_at(x.shape(), axis);
    std::vector<std::size_t> map(shape_numel(out_shape));
    for (std::size_t o = 0; o < in.outer; ++o)
        for (std::size_t i = 0; i < length; ++i)
            for (std::size_t r = 0; r < in.inner; ++r)
                map[(o * length + i) * in.inner + r] = (o * in.n + i + start) * in.inner + r;
    return gather("narrow", x, std::move(out_shape), std::move(map));
}

template <typename T>
Tensor<T> roll(const Tensor<T>& x, std::size_t axis, std::int64_t shift) {
    if (axis >= x.rank()) throw ShapeError("roll: axis out of range for " + shape_str(x.shape()));
    const AxisSplit in = split_at(x.shape(), axis);
    if (in.n == 0) return x;
    const auto n = static_cast<std::int64_t>(in.n);
    const std::int64_t s = ((shift % n) + n) % n;
    std::vector<std::size_t> map(x.numel());
    for (std::size_t o = 0; o < in.outer; ++o)
        for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t src = (i - s + n) % n;
            for (std::size_t r = 0; r < in.inner; ++r)
                map[(o * in.n + i) * in.inner + r] = (o * in.n + src) * in.inner + r;
        }
    return gather("roll", x, x.shape(), std::move(map));
}

template <typename T>
Tensor<T> index_select(const Tensor<T>& x, const std::vector<std::size_t>& indices) {
    if (x.rank() == 0) throw ShapeError("index_select: rank-0 input");
    const std::size_t rows = x.dim(0);
    const std::size_t row = x.numel() / std::max<std::size_t>(rows, 1);
    Shape out_shape = x.shape();
    out_shape[0] = indices.size();
    std::vector<std::size_t> map(indices.size() * row);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows) throw ShapeError("index_select: index out of range");
        for (std::size_t r = 0; r < row; ++r) map[i * row + r] = indices[i] * row + r;
    }
    return gather("index_select", x, std::move(out_shape), std::move(map));
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ShapeError("stack: no inputs");
    const Shape& s = xs.front().shape();
    const std::size_t n = xs.front().numel();
    std::vector<T> out;
    out.reserve(n * xs.size());
    for (const Tensor<T>& t : xs) {
        check_same_shape("stack", xs.front(), t);
        out.insert(out.end(), t.values().begin(), t.values().end());
    }
    Shape out_shape{xs.size()};
    out_shape.insert(out_shape.end(), s.begin(), s.end());
    Tensor<T> result(std::move(out_shape), std::move(out));

    GradTape<T>* tape = GradTape<T>::active();
    const bool any = tape && std::any_of(xs.begin(), xs.end(), [&](const Tensor<T>& t) { return tape->tracks(t); });
    if (any) {
        tape->record("stack", result, xs, [n](std::span<const T> g, Sinks<T> gin) {
            for (std::size_t k = 0; k < gin.size(); ++k) {
                if (!gin[k]) continue;
                for (std::size_t i = 0; i < n; ++i) (*gin[k])[i] += g[k * n + i];
            }
        });
    }
    return result;
}

// -- elementwise -----------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(BinaryKind::kAdd, "add", a, b);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(BinaryKind::kSub, "sub", a, b);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(BinaryKind::kMul, "mul", a, b);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    auto xv = x.values();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factor;
    Tensor<T> result(x.shape(), std::move(out));
    if (auto* tape = recording_tape({&x})) {
        tape->record("scale", result, {x}, [factor](std::span<const T> g, Sinks<T> gin) {
            std::vector<T>& gx = *gin[0];
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
        });
    }
    return result;
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
    return unary<T>(
        "abs", x, [](T v) { return std::abs(v); },
        [](T v) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
    return unary<T>(
        "square", x, [](T v) { return v * v; }, [](T v) { return T(2) * v; });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    return unary<T>("gelu", x, &gelu_value<T>, &gelu_grad<T>);
}

// -- reductions ---------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T s = 0;
    for (T v : x.values()) s += v;
    Tensor<T> result = Tensor<T>::scalar(s);
    if (auto* tape = recording_tape({&x})) {
        tape->record("sum", result, {x}, [](std::span<const T> g, Sinks<T> gin) {
            for (T& v : *gin[0]) v += g[0];
        });
    }
    return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.numel() == 0) throw ShapeError("mean: empty tensor");
    return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// -- linear algebra -------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() < 2 || bs.size() < 2) {
        throw ShapeError("matmul: operands need rank >= 2, got " + shape_str(as) + " and " + shape_str(bs));
    }
    const std::size_t m = as[as.size() - 2], k = as.back();
    const std::size_t kb = bs[bs.size() - 2], n = bs.back();
    const bool shared_b = bs.size() == 2;
    const bool batch_ok = shared_b || (as.size() == bs.size() && std::equal(as.begin(), as.end() - 2, bs.begin()));
    if (k != kb || !batch_ok) {
        throw ShapeError("matmul: shape mismatch " + shape_str(as) + " x " + shape_str(bs));
    }
    std::size_t batch = 1;
    for (std::size_t d = 0; d + 2 < as.size(); ++d) batch *= as[d];

    Shape out_shape(as.begin(), as.end() - 1);
    out_shape.push_back(n);
    std::vector<T> out(batch * m * n, T(0));
    const T* ap = a.data();
    const T* bp = b.data();
#pragma omp parallel for schedule(static)
    for (Index bi = 0; bi < static_cast<Index>(batch); ++bi) {
        const T* bsl = shared_b ? bp : bp + bi * k * n;
        gemm_rows(ap + bi * m * k, bsl, out.data() + bi * m * n, m, k, n);
    }

    Tensor<T> result(std::move(out_shape), std::move(out));
    if (auto* tape = recording_tape({&a, &b})) {
        tape->record("matmul", result, {a, b},
                     [a, b, batch, m, k, n, shared_b](std::span<const T> g, Sinks<T> gin) {
                         const T* ap = a.data();
                         const T* bp = b.data();
                         const T* gp = g.data();
                         if (gin[0]) {
                             T* ga = gin[0]->data();
#pragma omp parallel for schedule(static)
                             for (Index bi = 0; bi < static_cast<Index>(batch); ++bi) {
                                 const T* bsl = shared_b ? bp : bp + bi * k * n;
                                 gemm_grad_a(gp + bi * m * n, bsl, ga + bi * m * k, m, k, n);
                             }
                         }
                         if (gin[1]) {
                             T* gb = gin[1]->data();
                             const std::size_t slices = shared_b ? 1 : batch;
                             const std::size_t per = shared_b ? batch : 1;
                             // gb[p,j] = sum over rows i of a[i,p] * g[i,j], rows in ascending order.
#pragma omp parallel for schedule(static)
                             for (Index sp = 0; sp < static_cast<Index>(slices * k); ++sp) {
                                 const std::size_t s = sp / k, p = sp % k;
                                 T* row = gb + (s * k + p) * n;
                                 for (std::size_t q = 0; q < per; ++q) {
                                     const std::size_t bi = s * per + q;
                                     for (std::size_t i = 0; i < m; ++i) {
                                         const T av = ap[(bi * m + i) * k + p];
                                         const T* gr = gp + (bi * m + i) * n;
                                         for (std::size_t j = 0; j < n; ++j) row[j] += av * gr[j];
                                     }
                                 }
                             }
                         }
                     });
    }
    return result;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (weight.rank() != 2 || x.rank() < 1 || x.shape().back() != weight.dim(0)) {
        throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
    }
    const std::size_t in = weight.dim(0), out_f = weight.dim(1);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_f)) {
        throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
    }
    const std::size_t rows = x.numel() / std::max<std::size_t>(in, 1);
    Shape out_shape = x.shape();
    out_shape.back() = out_f;

    std::vector<T> out(rows * out_f, T(0));
    const T* xp = x.data();
    const T* wp = weight.data();
    const T* bp = bias.defined() ? bias.data() : nullptr;
    constexpr std::size_t kBlock = 64;
    const std::size_t blocks = (rows + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static)
    for (Index blk = 0; blk < static_cast<Index>(blocks); ++blk) {
        const std::size_t r0 = blk * kBlock;
        const std::size_t nr = std::min(kBlock, rows - r0);
        T* o = out.data() + r0 * out_f;
        if (bp)
            for (std::size_t r = 0; r < nr; ++r) std::copy(bp, bp + out_f, o + r * out_f);
        gemm_rows(xp + r0 * in, wp, o, nr, in, out_f);
    }

    Tensor<T> result(std::move(out_shape), std::move(out));
    if (auto* tape = recording_tape({&x, &weight, &bias})) {
        std::vector<Tensor<T>> inputs{x, weight};
        if (bias.defined()) inputs.push_back(bias);
        tape->record("linear", result, std::move(inputs),
                     [x, weight, rows, in, out_f](std::span<const T> g, Sinks<T> gin) {
                         const T* xp = x.data();
                         const T* wp = weight.data();
                         const T* gp = g.data();
                         if (gin[0]) {
                             T* gx = gin[0]->data();
#pragma omp parallel for schedule(static)
                             for (Index r = 0; r < static_cast<Index>(rows); ++r)
                                 gemm_grad_a(gp + r * out_f, wp, gx + r * in, 1, in, out_f);
                         }
                         if (gin[1]) {
                             T* gw = gin[1]->data();
#pragma omp parallel for schedule(static)
                             for (Index p = 0; p < static_cast<Index>(in); ++p) {
                                 T* row = gw + p * out_f;
                                 for (std::size_t r = 0; r < rows; ++r) {
                                     const T xv = xp[r * in + p];
                                     const T* gr = gp + r * out_f;
                                     for (std::size_t j = 0; j < out_f; ++j) row[j] += xv * gr[j];
                                 }
                             }
                         }
                         if (gin.size() > 2 && gin[2]) {
                             T* gb = gin[2]->data();
                             for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t j = 0; j < out_f; ++j) gb[j] += gp[r * out_f + j];
                         }
                     });
    }
    return result;
}

// -- normalization / activation ---------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.rank()) throw ShapeError("softmax: axis out of range for " + shape_str(x.shape()));
    const AxisSplit sp = split_at(x.shape(), axis);
    auto xv = x.values();
    std::vector<T> out(xv.size());
#pragma omp parallel for schedule(static)
    for (Index oi = 0; oi < static_cast<Index>(sp.outer * sp.inner); ++oi) {
        const std::size_t o = oi / sp.inner, r = oi % sp.inner;
        const std::size_t base = o * sp.n * sp.inner + r;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t i = 0; i < sp.n; ++i) mx = std::max(mx, xv[base + i * sp.inner]);
        T total = 0;
        for (std::size_t i = 0; i < sp.n; ++i) {
            const T e = std::exp(xv[base + i * sp.inner] - mx);
            out[base + i * sp.inner] = e;
            total += e;
        }
        for (std::size_t i = 0; i < sp.n; ++i) out[base + i * sp.inner] /= total;
    }
    Tensor<T> result(x.shape(), std::move(out));
    if (auto* tape = recording_tape({&x})) {
        tape->record("softmax", result, {x}, [result, sp](std::span<const T> g, Sinks<T> gin) {
            auto y = result.values();
            std::vector<T>& gx = *gin[0];
#pragma omp parallel for schedule(static)
            for (Index oi = 0; oi < static_cast<Index>(sp.outer * sp.inner); ++oi) {
                const std::size_t o = oi / sp.inner, r = oi % sp.inner;
                const std::size_t base = o * sp.n * sp.inner + r;
                T dot = 0;
                for (std::size_t i = 0; i < sp.n; ++i) dot += g[base + i * sp.inner] * y[base + i * sp.inner];
                for (std::size_t i = 0; i < sp.n; ++i) {
                    const std::size_t at = base + i * sp.inner;
                    gx[at] += y[at] * (g[at] - dot);
                }
            }
        });
    }
    return result;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm: rank-0 input");
    const std::size_t c = x.shape().back();
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
        throw ShapeError("layer_norm: affine parameters " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match channels of " + shape_str(x.shape()));
    }
    if (!(eps > 0)) throw Error("layer_norm: eps must be positive");
    const std::size_t rows = x.numel() / std::max<std::size_t>(c, 1);
    auto xv = x.values();
    auto gv = gamma.values();
    auto bv = beta.values();
    std::vector<T> out(xv.size());
    std::vector<T> xhat(xv.size());
    std::vector<T> rstd(rows);
#pragma omp parallel for schedule(static)
    for (Index r = 0; r < static_cast<Index>(rows); ++r) {
        const T* row = xv.data() + r * c;
        T mu = 0;
        for (std::size_t i = 0; i < c; ++i) mu += row[i];
        mu /= static_cast<T>(c);
        T var = 0;
        for (std::size_t i = 0; i < c; ++i) var += (row[i] - mu) * (row[i] - mu);
        var /= static_cast<T>(c);
        const T rs = T(1) / std::sqrt(var + eps);
        rstd[r] = rs;
        for (std::size_t i = 0; i < c; ++i) {
            const T h = (row[i] - mu) * rs;
            xhat[r * c + i] = h;
            out[r * c + i] = h * gv[i] + bv[i];
        }
    }
    Tensor<T> result(x.shape(), std::move(out));
    if (auto* tape = recording_tape({&x, &gamma, &beta})) {
        tape->record("layer_norm", result, {x, gamma, beta},
                     [gamma, xhat = std::move(xhat), rstd = std::move(rstd), rows, c](std::span<const T> g,
                                                                                      Sinks<T> gin) {
                         auto gv = gamma.values();
                         if (gin[0]) {
                             std::vector<T>& gx = *gin[0];
#pragma omp parallel for schedule(static)
                             for (Index r = 0; r < static_cast<Index>(rows); ++r) {
                                 T m1 = 0, m2 = 0;
                                 for (std::size_t i = 0; i < c; ++i) {
                                     const T d = g[r * c + i] * gv[i];
                                     m1 += d;
                                     m2 += d * xhat[r * c + i];
                                 }
                                 m1 /= static_cast<T>(c);
                                 m2 /= static_cast<T>(c);
                                 for (std::size_t i = 0; i < c; ++i) {
                                     const T d = g[r * c + i] * gv[i];
                                     gx[r * c + i] += rstd[r] * (d - m1 - xhat[r * c + i] * m2);
                                 }
                             }
                         }
                         for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t i = 0; i < c; ++i) {
                                 if (gin[1]) (*gin[1])[i] += g[r * c + i] * xhat[r * c + i];
                                 if (gin[2]) (*gin[2])[i] += g[r * c + i];
                             }
                         }
                     });
    }
    return result;
}

// -- image ops -------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t padding) {
    if (x.rank() != 4 || weight.rank() != 4) {
        throw ShapeError("conv2d: expected 4-d input and weight, got " + shape_str(x.shape()) + " and " +
                         shape_str(weight.shape()));
    }
    const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(1) != cin) {
        throw ShapeError("conv2d: channel mismatch, input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(weight.shape()));
    }
    if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
    if (bias.defined() && bias.shape() != Shape{cout}) {
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(cout) +
                         " output channels");
    }
    if (h + 2 * padding < kh || w + 2 * padding < kw) throw ShapeError("conv2d: kernel larger than padded input");
    const std::size_t ho = h + 2 * padding - kh + 1, wo = w + 2 * padding - kw + 1;
    const auto pad_i = static_cast<std::int64_t>(padding);

    // Valid output column range for kernel column kx: 0 <= ox + kx - pad < w.
    auto col_range = [=](std::size_t kx, std::size_t& lo, std::size_t& hi) {
        const std::int64_t l = std::max<std::int64_t>(0, pad_i - static_cast<std::int64_t>(kx));
        const std::int64_t u = std::min<std::int64_t>(static_cast<std::int64_t>(wo),
                                                      static_cast<std::int64_t>(w) + pad_i - static_cast<std::int64_t>(kx));
        lo = static_cast<std::size_t>(l);
        hi = static_cast<std::size_t>(std::max(l, u));
    };

    std::vector<T> out(batch * cout * ho * wo, T(0));
    const T* xp = x.data();
    const T* wp = weight.data();
#pragma omp parallel for schedule(static)
    for (Index bc = 0; bc < static_cast<Index>(batch * cout); ++bc) {
        const std::size_t b = bc / cout, co = bc % cout;
        T* plane = out.data() + bc * ho * wo;
        if (bias.defined()) std::fill(plane, plane + ho * wo, bias.data()[co]);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* in = xp + (b * cin + ci) * h * w;
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const T wv = wp[((co * cin + ci) * kh + ky) * kw + kx];
                    std::size_t lo, hi;
                    col_range(kx, lo, hi);
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        const std::int64_t iy = static_cast<std::int64_t>(oy + ky) - pad_i;
                        if (iy < 0 || iy >= static_cast<std::int64_t>(h)) continue;
                        const T* src = in + iy * w + kx - padding;
                        T* dst = plane + oy * wo;
                        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] += wv * src[ox];
                    }
                }
            }
        }
    }

    Tensor<T> result(Shape{batch, cout, ho, wo}, std::move(out));
    if (auto* tape = recording_tape({&x, &weight, &bias})) {
        std::vector<Tensor<T>> inputs{x, weight};
        if (bias.defined()) inputs.push_back(bias);
        tape->record("conv2d", result, std::move(inputs),
                     [=](std::span<const T> g, Sinks<T> gin) {
                         const T* xp = x.data();
                         const T* wp = weight.data();
                         const T* gp = g.data();
                         if (gin[0]) {
                             T* gx = gin[0]->data();
#pragma omp parallel for schedule(static)
                             for (Index bci = 0; bci < static_cast<Index>(batch * cin); ++bci) {
                                 const std::size_t b = bci / cin, ci = bci % cin;
                                 T* dst_plane = gx + bci * h * w;
                                 for (std::size_t co = 0; co < cout; ++co) {
                                     const T* gplane = gp + (b * cout + co) * ho * wo;
                                     for (std::size_t ky = 0; ky < kh; ++ky) {
                                         for (std::size_t kx = 0; kx < kw; ++kx) {
                                             const T wv = wp[((co * cin + ci) * kh + ky) * kw + kx];
                                             std::size_t lo, hi;
                                             col_range(kx, lo, hi);
                                             for (std::size_t oy = 0; oy < ho; ++oy) {
                                                 const std::int64_t iy = static_cast<std::int64_t>(oy + ky) - pad_i;
                                                 if (iy < 0 || iy >= static_cast<std::int64_t>(h)) continue;
                                                 T* dst = dst_plane + iy * w + kx - padding;
                                                 const T* src = gplane + oy * wo;
                                                 for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] += wv * src[ox];
                                             }
                                         }
                                     }
                                 }
                             }
                         }
                         if (gin[1]) {
                             T* gw = gin[1]->data();
#pragma omp parallel for schedule(static)
                             for (Index cc = 0; cc < static_cast<Index>(cout * cin); ++cc) {
                                 const std::size_t co = cc / cin, ci = cc % cin;
                                 for (std::size_t ky = 0; ky < kh; ++ky) {
                                     for (std::size_t kx = 0; kx < kw; ++kx) {
                                         std::size_t lo, hi;
                                         col_range(kx, lo, hi);
                                         T s = 0;
                                         for (std::size_t b = 0; b < batch; ++b) {
                                             const T* in = xp + (b * cin + ci) * h * w;
                                             const T* gplane = gp + (b * cout + co) * ho * wo;
                                             for (std::size_t oy = 0; oy < ho; ++oy) {
                                                 const std::int64_t iy = static_cast<std::int64_t>(oy + ky) - pad_i;
                                                 if (iy < 0 || iy >= static_cast<std::int64_t>(h)) continue;
                                                 const T* src = in + iy * w + kx - padding;
                                                 const T* gr = gplane + oy * wo;
                                                 for (std::size_t ox = lo; ox < hi; ++ox) s += gr[ox] * src[ox];
                                             }
                                         }
                                         gw[((co * cin + ci) * kh + ky) * kw + kx] += s;
                                     }
                                 }
                             }
                         }
                         if (gin.size() > 2 && gin[2]) {
                             T* gb = gin[2]->data();
                             for (std::size_t co = 0; co < cout; ++co) {
                                 T s = 0;
                                 for (std::size_t b = 0; b < batch; ++b) {
                                     const T* gplane = gp + (b * cout + co) * ho * wo;
                                     for (std::size_t i = 0; i < ho * wo; ++i) s += gplane[i];
                                 }
                                 gb[co] += s;
                             }
                         }
                     });
    }
    return result;
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t factor) {
    if (x.rank() != 4 || factor == 0) throw ShapeError("pixel_shuffle: expected 4-d input and factor >= 1");
    const std::size_t b = x.dim(0), cs = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t s2 = factor * factor;
    if (cs % s2 != 0) {
        throw ShapeError("pixel_shuffle: " + std::to_string(cs) + " channels not divisible by factor^2 = " +
                         std::to_string(s2));
    }
    const std::size_t c = cs / s2, oh = h * factor, ow = w * factor;
    std::vector<std::size_t> map(x.numel());
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    const std::size_t i = y % factor, j = xx % factor;
                    const std::size_t src_c = ci * s2 + i * factor + j;
                    map[((bi * c + ci) * oh + y) * ow + xx] = ((bi * cs + src_c) * h + y / factor) * w + xx / factor;
                }
    return gather("pixel_shuffle", x, Shape{b, c, oh, ow}, std::move(map));
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t factor) {
    if (x.rank() != 4 || factor == 0) throw ShapeError("pixel_unshuffle: expected 4-d input and factor >= 1");
    const std::size_t b = x.dim(0), c = x.dim(1), oh = x.dim(2), ow = x.dim(3);
    if (oh % factor != 0 || ow % factor != 0) {
        throw ShapeError("pixel_unshuffle: spatial size " + shape_str(x.shape()) + " not divisible by factor");
    }
    const std::size_t s2 = factor * factor, h = oh / factor, w = ow / factor, cs = c * s2;
    std::vector<std::size_t> map(x.numel());
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    const std::size_t dst_c = ci * s2 + (y % factor) * factor + xx % factor;
                    map[((bi * cs + dst_c) * h + y / factor) * w + xx / factor] = ((bi * c + ci) * oh + y) * ow + xx;
                }
    return gather("pixel_unshuffle", x, Shape{b, cs, h, w}, std::move(map));
}

#define PFT_INSTANTIATE_OPS(T)                                                                        \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                              \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                    \
    template Tensor<T> transpose_last2(const Tensor<T>&);                                             \
    template Tensor<T> pad(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                  \
    template Tensor<T> narrow(const Tensor<T>&, std::size_t, std::size_t, std::size_t);               \
    template Tensor<T> roll(const Tensor<T>&, std::size_t, std::int64_t);                             \
    template Tensor<T> index_select(const Tensor<T>&, const std::vector<std::size_t>&);               \
    template Tensor<T> stack(const std::vector<Tensor<T>>&);                                          \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> scale(const Tensor<T>&, T);                                                    \
    template Tensor<T> abs(const Tensor<T>&);                                                         \
    template Tensor<T> square(const Tensor<T>&);                                                      \
    template Tensor<T> gelu(const Tensor<T>&);                                                        \
    template Tensor<T> sum(const Tensor<T>&);                                                         \
    template Tensor<T> mean(const Tensor<T>&);                                                        \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                        \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);           \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t);     \
    template Tensor<T> pixel_shuffle(const Tensor<T>&, std::size_t);                                  \
    template Tensor<T> pixel_unshuffle(const Tensor<T>&, std::size_t);

PFT_INSTANTIATE_OPS(float)
PFT_INSTANTIATE_OPS(double)

}  // namespace pft::ops
