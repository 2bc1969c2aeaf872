#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "pft/gradcheck.hpp"
#include "pft/ops.hpp"
#include "support.hpp"

namespace pft {
namespace {

using testing::uniform_tensor;
using Inputs = std::vector<Tensor<double>>;

// Max relative error of tape vs finite-difference gradients of
// sum(f(inputs) * R) for a fixed random R.
double op_gradient_error(Inputs inputs, const std::function<Tensor<double>(const Inputs&)>& f,
                         double step = 1e-3) {
    ParameterStore<double> store;
    for (std::size_t i = 0; i < inputs.size(); ++i) store.add("input" + std::to_string(i), inputs[i]);
    std::mt19937_64 rng(99);
    Tensor<double> projection;
    auto loss_fn = [&]() {
        auto y = f(inputs);
        if (!projection.defined()) projection = uniform_tensor<double>(y.shape(), rng);
        return ops::sum(ops::mul(y, projection));
    };
    GradcheckOptions opt;
    opt.step = step;
    opt.exhaustive_below = 100;
    opt.random_probes = 100;
    return check_gradients(store, loss_fn, opt).max_rel_error();
}

TEST(Matmul, HandExamples) {
    Tensor<double> eye({2, 2}, {1, 0, 0, 1});
    Tensor<double> a({2, 2}, {1, 2, 3, 4});
    EXPECT_TRUE(testing::bit_equal(ops::matmul(eye, a), a));
    Tensor<double> col({2, 1}, {5, 6});
    auto p = ops::matmul(a, col);
    EXPECT_EQ(p.shape(), (Shape{2, 1}));
    EXPECT_EQ(p.values()[0], 17.0);
    EXPECT_EQ(p.values()[1], 39.0);
    auto z = ops::matmul(Tensor<double>({2, 3}), Tensor<double>::full({3, 4}, 1.0));
    EXPECT_EQ(z.shape(), (Shape{2, 4}));
    for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, MismatchNamesBothShapes) {
    try {
        ops::matmul(Tensor<double>({2, 3}), Tensor<double>({4, 5}));
        FAIL() << "expected a shape error";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("[4,5]"), std::string::npos) << e.what();
    }
}

TEST(Matmul, MatchesLoopOracleAndIdentityAssociativity) {
    std::mt19937_64 rng(1);
    auto a = uniform_tensor<double>({3, 4, 5}, rng);
    auto b = uniform_tensor<double>({3, 5, 2}, rng);
    auto c = ops::matmul(a, b);
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 2; ++j) {
                double s = 0;
                for (std::size_t k = 0; k < 5; ++k) s += a.at({n, i, k}) * b.at({n, k, j});
                EXPECT_NEAR(c.at({n, i, j}), s, 1e-14);
            }
    std::vector<double> eye(25, 0.0);
    for (std::size_t i = 0; i < 5; ++i) eye[i * 6] = 1.0;
    auto a2 = uniform_tensor<float>({4, 5}, rng);
    auto b2 = uniform_tensor<float>({5, 3}, rng);
    Tensor<float> id({5, 5}, std::vector<float>(eye.begin(), eye.end()));
    EXPECT_TRUE(testing::bit_equal(ops::matmul(ops::matmul(a2, id), b2), ops::matmul(a2, b2)));
}

TEST(Softmax, HandExamples) {
    auto u = ops::softmax(Tensor<double>({4}), 0);
    for (double v : u.values()) EXPECT_DOUBLE_EQ(v, 0.25);
    auto big = ops::softmax(Tensor<double>({2}, {1000, 1000}), 0);
    EXPECT_DOUBLE_EQ(big.values()[0], 0.5);
    EXPECT_DOUBLE_EQ(big.values()[1], 0.5);
    auto l2 = ops::softmax(Tensor<double>({2}, {std::log(2.0), 0.0}), 0);
    EXPECT_NEAR(l2.values()[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(l2.values()[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
    std::mt19937_64 rng(2);
    auto x = uniform_tensor<float>({3, 7, 5}, rng, -5, 5);
    auto s = ops::softmax(x, 1);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t c = 0; c < 5; ++c) {
            double total = 0;
            for (std::size_t b = 0; b < 7; ++b) {
                EXPECT_GT(s.at({a, b, c}), 0.0f);
                total += s.at({a, b, c});
            }
            EXPECT_NEAR(total, 1.0, 1e-6);
        }
    // in 64-bit so that x + c itself is not rounded away from the shifted input
    auto xd = cast<double>(x);
    auto shifted = ops::softmax(ops::add(xd, Tensor<double>::scalar(3.5)), 1);
    EXPECT_LE(max_abs_diff(ops::softmax(xd, 1), shifted), 1e-7);
}

TEST(LayerNorm, HandExamples) {
    Tensor<double> one({2}, {1, 1}), zero({2});
    auto c = ops::layer_norm(Tensor<double>::full({1, 2}, 3.0), one, zero, 1e-5);
    for (double v : c.values()) EXPECT_EQ(v, 0.0);
    auto pm = ops::layer_norm(Tensor<double>({1, 2}, {1, -1}), one, zero, 1e-12);
    EXPECT_NEAR(pm.values()[0], 1.0, 1e-10);
    EXPECT_NEAR(pm.values()[1], -1.0, 1e-10);
    std::mt19937_64 rng(4);
    auto x = uniform_tensor<double>({3, 2}, rng);
    auto five = ops::layer_norm(x, Tensor<double>({2}), Tensor<double>::full({2}, 5.0), 1e-5);
    for (double v : five.values()) EXPECT_EQ(v, 5.0);
}

TEST(LayerNorm, ZeroMeanUnitVariance) {
    std::mt19937_64 rng(5);
    auto x = uniform_tensor<double>({4, 16}, rng, -3, 7);
    auto y = ops::layer_norm(x, Tensor<double>::full({16}, 1.0), Tensor<double>({16}), 1e-12);
    for (std::size_t r = 0; r < 4; ++r) {
        double m = 0, v = 0;
        for (std::size_t c = 0; c < 16; ++c) m += y.at({r, c});
        m /= 16;
        for (std::size_t c = 0; c < 16; ++c) v += (y.at({r, c}) - m) * (y.at({r, c}) - m);
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v / 16, 1.0, 1e-9);
    }
}

TEST(Gelu, ExactErfValues) {
    auto g = ops::gelu(Tensor<double>({4}, {0.0, 1.0, 100.0, -1.0}));
    EXPECT_EQ(g.values()[0], 0.0);
    EXPECT_NEAR(g.values()[1], 0.841345, 1e-6);
    EXPECT_DOUBLE_EQ(g.values()[2], 100.0);
    EXPECT_NEAR(g.values()[3], -0.158655, 1e-6);
}

TEST(Conv2d, HandExamples) {
    auto ones = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    auto y = ops::conv2d(ones, Tensor<double>::full({1, 1, 3, 3}, 1.0), Tensor<double>({1}), 1);
    const std::vector<double> expect{4, 6, 4, 6, 9, 6, 4, 6, 4};
    EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()), expect);

    std::mt19937_64 rng(6);
    auto x = uniform_tensor<double>({2, 3, 5, 4}, rng);
    Tensor<double> eye({3, 3, 1, 1});
    for (std::size_t c = 0; c < 3; ++c) eye.mutable_values()[c * 3 + c] = 1.0;
    EXPECT_TRUE(testing::bit_equal(ops::conv2d(x, eye, Tensor<double>({3}), 0), x));

    auto constant = ops::conv2d(x, Tensor<double>({2, 3, 3, 3}), Tensor<double>({2}, {0.5, -2.0}), 1);
    for (std::size_t i = 0; i < constant.numel(); ++i)
        EXPECT_EQ(constant.values()[i], (i / 20) % 2 == 0 ? 0.5 : -2.0);
    EXPECT_THROW(ops::conv2d(x, Tensor<double>({2, 4, 3, 3}), Tensor<double>({2}), 1), ShapeError);
}

TEST(Conv2d, MatchesLoopOracle) {
    std::mt19937_64 rng(7);
    auto x = uniform_tensor<double>({2, 3, 6, 5}, rng);
    auto w = uniform_tensor<double>({4, 3, 3, 3}, rng);
    auto b = uniform_tensor<double>({4}, rng);
    auto y = ops::conv2d(x, w, b, 1);
    ASSERT_EQ(y.shape(), (Shape{2, 4, 6, 5}));
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t o = 0; o < 4; ++o)
            for (long i = 0; i < 6; ++i)
                for (long j = 0; j < 5; ++j) {
                    double s = b.values()[o];
                    for (std::size_t c = 0; c < 3; ++c)
                        for (long di = 0; di < 3; ++di)
                            for (long dj = 0; dj < 3; ++dj) {
                                const long yy = i + di - 1, xx = j + dj - 1;
                                if (yy < 0 || yy >= 6 || xx < 0 || xx >= 5) continue;
                                s += w.at({o, c, std::size_t(di), std::size_t(dj)}) *
                                     x.at({n, c, std::size_t(yy), std::size_t(xx)});
                            }
                    EXPECT_NEAR(y.at({n, o, std::size_t(i), std::size_t(j)}), s, 1e-13);
                }
    auto valid = ops::conv2d(x, w, b, 0);
    EXPECT_EQ(valid.shape(), (Shape{2, 4, 4, 3}));
}

TEST(PixelShuffle, DefinitionAndInverse) {
    auto x = Tensor<double>({1, 4, 1, 1}, {1, 2, 3, 4});
    auto y = ops::pixel_shuffle(x, 2);
    EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
    EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()), (std::vector<double>{1, 2, 3, 4}));
    EXPECT_EQ(ops::pixel_shuffle(Tensor<double>({1, 8, 2, 3}), 2).shape(), (Shape{1, 2, 4, 6}));
    EXPECT_THROW(ops::pixel_shuffle(Tensor<double>({1, 6, 2, 2}), 2), ShapeError);

    std::mt19937_64 rng(8);
    auto r = uniform_tensor<float>({2, 18, 3, 4}, rng);
    auto s = ops::pixel_shuffle(r, 3);
    EXPECT_TRUE(testing::bit_equal(ops::pixel_unshuffle(s, 3), r));
    std::vector<float> before(r.values().begin(), r.values().end()), after(s.values().begin(), s.values().end());
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    EXPECT_EQ(before, after);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t h = 0; h < 3; ++h)
            for (std::size_t w = 0; w < 4; ++w)
                for (std::size_t i = 0; i < 3; ++i)
                    for (std::size_t j = 0; j < 3; ++j)
                        EXPECT_EQ(s.at({1, c, h * 3 + i, w * 3 + j}), r.at({1, c * 9 + i * 3 + j, h, w}));
}

TEST(ShapeOps, RollPadNarrowPermute) {
    auto row = Tensor<double>({1, 2}, {1, 2});
    auto rolled = ops::roll(row, 1, 1);
    EXPECT_EQ(rolled.values()[0], 2.0);
    EXPECT_EQ(rolled.values()[1], 1.0);

    std::mt19937_64 rng(9);
    auto x = uniform_tensor<double>({2, 3, 4}, rng);
    auto padded = ops::pad(x, 1, 1, 2);
    EXPECT_EQ(padded.shape(), (Shape{2, 6, 4}));
    EXPECT_EQ(padded.at({1, 0, 3}), 0.0);
    EXPECT_EQ(padded.at({1, 2, 3}), x.at({1, 1, 3}));
    EXPECT_TRUE(testing::bit_equal(ops::narrow(padded, 1, 1, 3), x));

    auto p = ops::permute(x, {2, 0, 1});
    EXPECT_EQ(p.shape(), (Shape{4, 2, 3}));
    EXPECT_EQ(p.at({3, 1, 2}), x.at({1, 2, 3}));
    EXPECT_TRUE(testing::bit_equal(ops::roll(ops::roll(x, 2, 3), 2, -3), x));
}

TEST(Broadcast, RightAlignedRules) {
    auto a = Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6});
    auto b = Tensor<double>({3}, {10, 20, 30});
    auto s = ops::add(a, b);
    EXPECT_EQ(s.at({1, 2}), 36.0);
    auto col = Tensor<double>({2, 1}, {2, 3});
    auto m = ops::mul(a, col);
    EXPECT_EQ(m.at({1, 0}), 12.0);
    EXPECT_THROW(ops::add(a, Tensor<double>({2})), ShapeError);
}

TEST(OpGradients, ElementwiseAndReductions) {
    std::mt19937_64 rng(10);
    auto a = uniform_tensor<double>({3, 4}, rng);
    auto b = uniform_tensor<double>({4}, rng);
    auto c = uniform_tensor<double>({3, 1}, rng);
    EXPECT_LE(op_gradient_error({a, b}, [](const Inputs& in) { return ops::add(in[0], in[1]); }), 1e-4);
    EXPECT_LE(op_gradient_error({a, c}, [](const Inputs& in) { return ops::sub(in[0], in[1]); }), 1e-4);
    EXPECT_LE(op_gradient_error({a, c}, [](const Inputs& in) { return ops::mul(in[0], in[1]); }), 1e-4);
    EXPECT_LE(op_gradient_error({a}, [](const Inputs& in) { return ops::scale(in[0], -1.7); }), 1e-4);
    EXPECT_LE(op_gradient_error({a}, [](const Inputs& in) { return ops::square(in[0]); }), 1e-4);
    EXPECT_LE(op_gradient_error({a}, [](const Inputs& in) { return ops::gelu(in[0]); }), 1e-4);
    EXPECT_LE(op_gradient_error({a}, [](const Inputs& in) { return ops::sum(in[0]); }), 1e-4);
    EXPECT_LE(op_gradient_error({a}, [](const Inputs& in) { return ops::mean(in[0]); }), 1e-4);
    // keep |x| away from the kink at zero
    auto away = uniform_tensor<double>({3, 4}, rng, 0.2, 1.0);
    for (std::size_t i = 0; i < away.numel(); i += 2) away.mutable_values()[i] *= -1;
    EXPECT_LE(op_gradient_error({away}, [](const Inputs& in) { return ops::abs(in[0]); }), 1e-4);
}

TEST(OpGradients, ShapeOps) {
    std::mt19937_64 rng(11);
    auto x = uniform_tensor<double>({2, 3, 4}, rng);
    EXPECT_LE(op_gradient_error({x}, [](const Inputs& in) { return ops::reshape(in[0], {6, 4}); }), 1e-4);
    EXPECT_LE(op_gradient_error({x}, [](const Inputs& in) { return ops::permute(in[0], {1, 2, 0}); }), 1e-4);
    EXPECT_LE(op_gradient_error({x}, [](const Inputs& in) { return ops::transpose_last2(in[0]); }), 1e-4);
    EXPECT_LE(op_gradient_error({x}, [](const Inputs& in) { return ops::pad(in[0], 2, 1, 2); }), 1e-4);
    EXPECT_LE(op_gradient_error({x}, [](const Inputs& in) { return ops::narrow(in[0], 1, 1, 2); }), 1e-4);
    EXPECT_LE(op_gradient_error({x}, [](const Inputs& in) { return ops::roll(in[0], 2, -3); }), 1e-4);
    EXPECT_LE(op_gradient_error({x}, [](const Inputs& in) { return ops::index_select(in[0], {1, 1, 0}); }), 1e-4);
    auto y = uniform_tensor<double>({2, 3, 4}, rng);
    EXPECT_LE(op_gradient_error({x, y}, [](const Inputs& in) { return ops::stack(in); }), 1e-4);
    auto z = uniform_tensor<double>({1, 8, 2, 3}, rng);
    EXPECT_LE(op_gradient_error({z}, [](const Inputs& in) { return ops::pixel_shuffle(in[0], 2); }), 1e-4);
    EXPECT_LE(op_gradient_error({z}, [](const Inputs& in) { return ops::pixel_unshuffle(ops::pixel_shuffle(in[0], 2), 2); }),
              1e-4);
}

TEST(OpGradients, LinearAlgebraAndNormalization) {
    std::mt19937_64 rng(12);
    auto a = uniform_tensor<double>({2, 3, 4}, rng);
    auto b = uniform_tensor<double>({2, 4, 5}, rng);
    auto shared = uniform_tensor<double>({4, 5}, rng);
    auto bias = uniform_tensor<double>({5}, rng);
    EXPECT_LE(op_gradient_error({a, b}, [](const Inputs& in) { return ops::matmul(in[0], in[1]); }), 1e-4);
    EXPECT_LE(op_gradient_error({a, shared}, [](const Inputs& in) { return ops::matmul(in[0], in[1]); }), 1e-4);
    EXPECT_LE(op_gradient_error({a, shared, bias}, [](const Inputs& in) { return ops::linear(in[0], in[1], in[2]); }),
              1e-4);
    EXPECT_LE(op_gradient_error({a, shared},
                                [](const Inputs& in) { return ops::linear(in[0], in[1], Tensor<double>()); }),
              1e-4);
    EXPECT_LE(op_gradient_error({a}, [](const Inputs& in) { return ops::softmax(in[0], 1); }), 1e-4);
    auto gamma = uniform_tensor<double>({4}, rng, 0.5, 1.5);
    auto beta = uniform_tensor<double>({4}, rng);
    EXPECT_LE(op_gradient_error({a, gamma, beta},
                                [](const Inputs& in) { return ops::layer_norm(in[0], in[1], in[2], 1e-5); }),
              1e-4);
    auto img = uniform_tensor<double>({2, 3, 5, 4}, rng);
    auto w = uniform_tensor<double>({2, 3, 3, 3}, rng);
    auto cb = uniform_tensor<double>({2}, rng);
    EXPECT_LE(op_gradient_error({img, w, cb}, [](const Inputs& in) { return ops::conv2d(in[0], in[1], in[2], 1); }),
              1e-4);
}

TEST(OpGradients, CompositeAtSmallStep) {
    std::mt19937_64 rng(13);
    auto x = uniform_tensor<double>({3, 6}, rng);
    auto w = uniform_tensor<double>({6, 6}, rng);
    auto g = uniform_tensor<double>({6}, rng, 0.5, 1.5);
    auto b = uniform_tensor<double>({6}, rng);
    auto composite = [](const Inputs& in) {
        return ops::layer_norm(ops::gelu(ops::matmul(in[0], in[1])), in[2], in[3], 1e-5);
    };
    EXPECT_LE(op_gradient_error({x, w, g, b}, composite, 1e-5), 1e-4);
}

}  // namespace
}  // namespace pft
