// Copyright 2026 The ZIAN Landmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "test_util.hpp"

#include "zian/autograd.hpp"
#include "zian/checkpoint.hpp"
#include "zian/gradcheck.hpp"
#include "zian/layers.hpp"
#include "zian/ops.hpp"
#include "zian/optim.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

using namespace zian;
using zian::test::random_param;
using zian::test::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;

GradCheckResult check(const std::function<Tensor<double>()>& f, ParameterList<double> inputs) {
    return finite_difference_check(f, inputs);
}

// Weighted sum with fixed random weights turns any op output into a scalar
// whose gradient exercises every output element.
Tensor<double> project(const Tensor<double>& y, std::uint64_t seed) {
    const auto w = random_tensor(y.shape(), seed);
    return sum(mul(y, w));
}

}  // namespace

TEST(Conv2d, ScalarKernelScalesInput) {
    Tensor<double> x({1, 1, 3, 3}, 1.0);
    Tensor<double> w({1, 1, 1, 1}, 2.0);
    Tensor<double> b({1}, 0.0);
    const auto y = conv2d(x, w, b, 1, 0);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
    for (double v : y.data())
        EXPECT_EQ(v, 2.0);
}

TEST(Conv2d, CenterTapIsIdentity) {
    const auto x = random_tensor({1, 1, 3, 3}, 7);
    std::vector<double> k(9, 0.0);
    k[4] = 1.0;
    const Tensor<double> w({1, 1, 3, 3}, k);
    const auto y = conv2d(x, w, Tensor<double>{}, 1, 1);
    for (std::size_t i = 0; i < 9; ++i)
        EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, OutputSizeFollowsStrideAndPadding) {
    const auto x = random_tensor({2, 3, 9, 7}, 1);
    const auto w = random_tensor({4, 3, 3, 3}, 2);
    const auto y = conv2d(x, w, Tensor<double>{}, 2, 1);
    EXPECT_EQ(y.shape(), (Shape{2, 4, 5, 4}));  // floor((9+2-3)/2)+1, floor((7+2-3)/2)+1
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
    auto x = random_param({2, 3, 8, 8}, 11);
    auto w = random_param({4, 3, 3, 3}, 12);
    auto b = random_param({4}, 13);
    const auto r = check([&] { return project(conv2d(x, w, b, 1, 1), 14); },
                         {{"input", x}, {"weight", w}, {"bias", b}});
    EXPECT_LE(r.max_rel_error, kGradTol) << r.worst_input << "[" << r.worst_index << "]";
    EXPECT_EQ(r.checked, x.size() + w.size() + b.size());
}

TEST(Conv2d, StridedGradientsMatchFiniteDifferences) {
    auto x = random_param({1, 2, 7, 6}, 21);
    auto w = random_param({3, 2, 3, 3}, 22);
    const auto r = check([&] { return project(conv2d(x, w, Tensor<double>{}, 2, 1), 23); },
                         {{"input", x}, {"weight", w}});
    EXPECT_LE(r.max_rel_error, kGradTol);
}

TEST(Conv2d, ChannelMismatchNamesAxis) {
    const auto x = random_tensor({1, 2, 5, 5}, 1);
    const auto w = random_tensor({4, 3, 3, 3}, 2);
    try {
        conv2d(x, w, Tensor<double>{}, 1, 1);
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        EXPECT_EQ(e.op(), "conv2d");
        EXPECT_EQ(e.axis(), "C");
        EXPECT_EQ(e.expected(), 3);
        EXPECT_EQ(e.actual(), 2);
    }
}

TEST(Conv2d, KernelLargerThanPaddedInputRejected) {
    const auto x = random_tensor({1, 1, 2, 8}, 1);
    const auto w = random_tensor({1, 1, 5, 5}, 2);
    try {
        conv2d(x, w, Tensor<double>{}, 1, 1);
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        EXPECT_EQ(e.axis(), "H");
    }
    EXPECT_THROW(conv2d(x, random_tensor({1, 1, 1, 1}, 3), Tensor<double>{}, 0, 0), DimensionError);
}

TEST(Primitives, ReluClampsNegatives) {
    const Tensor<double> x({3}, {-1.0, 0.0, 2.0});
    const auto y = relu(x);
    EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(Primitives, BatchnormOfConstantMapIsBeta) {
    Tensor<double> x({2, 1, 3, 3}, 4.25);
    auto gamma = Tensor<double>::parameter({1}, {1.0});
    auto beta = Tensor<double>::parameter({1}, {5.0});
    Tensor<double> rm({1}, 0.0), rv({1}, 1.0);
    const auto y = batchnorm2d(x, gamma, beta, rm, rv, true);
    for (double v : y.data())
        EXPECT_DOUBLE_EQ(v, 5.0);
    // momentum 0.1 toward the batch statistics
    EXPECT_DOUBLE_EQ(rm.data()[0], 0.1 * 4.25);
    EXPECT_DOUBLE_EQ(rv.data()[0], 0.9);
}

TEST(Primitives, BatchnormTrainModeNeedsTwoElements) {
    Tensor<double> x({1, 2, 1, 1}, 1.0);
    auto bn = BatchNorm2d<double>::make(2);
    EXPECT_THROW(bn.forward(x, true), DimensionError);
    EXPECT_NO_THROW(bn.forward(x, false));
}

TEST(Primitives, BatchnormGradientsBothModes) {
    auto x = random_param({3, 2, 2, 3}, 31);
    auto gamma = random_param({2}, 32, 0.5, 1.5);
    auto beta = random_param({2}, 33);
    Tensor<double> rm({2}, 0.1), rv({2}, 1.3);
    for (bool training : {true, false}) {
        const auto r = check(
            [&] {
                auto m = rm, v = rv;
                return project(batchnorm2d(x, gamma, beta, m, v, training), 34);
            },
            {{"x", x}, {"gamma", gamma}, {"beta", beta}});
        EXPECT_LE(r.max_rel_error, kGradTol) << "training=" << training;
    }
}

TEST(Primitives, MatmulGradientsMatchFiniteDifferences) {
    auto a = random_param({4, 6}, 41);
    auto b = random_param({6, 3}, 42);
    const auto r = check([&] { return project(matmul(a, b), 43); }, {{"a", a}, {"b", b}});
    EXPECT_LE(r.max_rel_error, kGradTol);

    auto a3 = random_param({2, 4, 5}, 44);
    auto b3 = random_param({2, 5, 3}, 45);
    auto shared = random_param({5, 3}, 46);
    auto left = random_param({3, 5}, 47);
    const auto r3 = check(
        [&] {
            return add(add(project(matmul(a3, b3), 48), project(matmul(a3, shared), 49)),
                       project(matmul(left, permute(a3, {0, 2, 1})), 50));
        },
        {{"a3", a3}, {"b3", b3}, {"shared", shared}, {"left", left}});
    EXPECT_LE(r3.max_rel_error, kGradTol);
}

TEST(Primitives, MatmulInnerMismatch) {
    EXPECT_THROW(matmul(random_tensor({4, 6}, 1), random_tensor({5, 3}, 2)), DimensionError);
    EXPECT_THROW(matmul(random_tensor({2, 4, 6}, 1), random_tensor({3, 6, 3}, 2)), DimensionError);
}

TEST(Primitives, ConcatChannelsStacksAndSplitsGradient) {
    auto a = random_param({2, 1, 3, 3}, 51);
    auto b = random_param({2, 2, 3, 3}, 52);
    const std::vector<Tensor<double>> xs{a, b};
    const auto y = concat_channels<double>(xs);
    ASSERT_EQ(y.shape(), (Shape{2, 3, 3, 3}));
    EXPECT_EQ(y.at({1, 0, 2, 1}), a.at({1, 0, 2, 1}));
    EXPECT_EQ(y.at({1, 2, 0, 1}), b.at({1, 1, 0, 1}));
    const auto r = check([&] { return project(concat_channels<double>(xs), 53); }, {{"a", a}, {"b", b}});
    EXPECT_LE(r.max_rel_error, kGradTol);
    const std::vector<Tensor<double>> bad{a, random_tensor({2, 1, 3, 4}, 54)};
    EXPECT_THROW(concat_channels<double>(bad), DimensionError);
}

TEST(Primitives, LayoutOpsRoundTrip) {
    const auto x = random_tensor({2, 3, 4}, 61);
    const auto p = permute(permute(x, {2, 0, 1}), {1, 2, 0});
    for (std::size_t i = 0; i < x.size(); ++i)
        EXPECT_EQ(p.data()[i], x.data()[i]);
    auto w = random_param({3, 4}, 62);
    const auto r = check([&] { return project(permute(repeat_batch(w, 3), {1, 0, 2}), 63); }, {{"w", w}});
    EXPECT_LE(r.max_rel_error, kGradTol);
    auto z = random_param({3, 2, 2}, 64);
    const auto r2 = check([&] { return project(select_batch(z, 1), 65); }, {{"z", z}});
    EXPECT_LE(r2.max_rel_error, kGradTol);
}

TEST(Primitives, LayerNormGradients) {
    auto x = random_param({2, 5, 8}, 71);
    auto g = random_param({8}, 72, 0.5, 1.5);
    auto b = random_param({8}, 73);
    const auto r = check([&] { return project(layer_norm(x, g, b), 74); }, {{"x", x}, {"g", g}, {"b", b}});
    EXPECT_LE(r.max_rel_error, kGradTol);
}

TEST(Softmax, UniformInputGivesUniformOutput) {
    for (double c : {-3.0, 0.0, 17.5}) {
        const auto y = softmax(Tensor<double>({3}, c), 0);
        for (double v : y.data())
            EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
    }
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
    const auto y = softmax(Tensor<double>({2}, {1000.0, 0.0}), 0);
    EXPECT_DOUBLE_EQ(y.data()[0], 1.0);
    EXPECT_GE(y.data()[1], 0.0);
    EXPECT_LT(y.data()[1], 1e-300);
    const auto f = softmax(Tensor<float>({2}, {1000.0f, 0.0f}), 0);
    EXPECT_TRUE(std::isfinite(f.data()[0]));
    EXPECT_FLOAT_EQ(f.data()[0], 1.0f);
}

TEST(Softmax, ColumnsSumToOneAndGradientsMatch) {
    auto x = random_param({5, 5}, 81, -3.0, 3.0);
    const auto y = softmax(x, 0);
    for (int c = 0; c < 5; ++c) {
        double s = 0.0;
        for (int r = 0; r < 5; ++r)
            s += y.at({r, c});
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
    const auto r = check([&] { return project(softmax(x, 0), 82); }, {{"x", x}});
    EXPECT_LE(r.max_rel_error, kGradTol);
}

TEST(Softmax, RejectsNonFiniteInput) {
    EXPECT_THROW(softmax(Tensor<double>({2}, {1.0, std::nan("")}), 0), NumericError);
    EXPECT_THROW(softmax(Tensor<double>({2}, {1.0, std::numeric_limits<double>::infinity()}), 0),
                 NumericError);
    EXPECT_THROW(softmax(Tensor<double>({2, 2}, 0.0), 2), DimensionError);
}

TEST(Softmax, ShiftInvariantAlongAxis) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto x = random_tensor({3, 4, 2}, 100 + seed, -5.0, 5.0);
        const auto y = softmax(x, 1);
        // shift every (outer, inner) line by its own constant
        auto shifted = x.detach();
        auto d = shifted.mutable_data();
        for (int o = 0; o < 3; ++o)
            for (int i = 0; i < 2; ++i) {
                const double c = 10.0 * (o + 1) - 7.0 * i;
                for (int l = 0; l < 4; ++l)
                    d[static_cast<std::size_t>((o * 4 + l) * 2 + i)] += c;
            }
        const auto z = softmax(shifted, 1);
        for (std::size_t k = 0; k < y.size(); ++k)
            EXPECT_NEAR(y.data()[k], z.data()[k], 1e-12);
    }
}

namespace {

// Per-pixel half-pixel bilinear oracle written directly from the sampling
// definition, independent of the tap tables used by the op.
double oracle_bilinear(const std::vector<double>& img, int h, int w, int oy, int ox, int out_h, int out_w) {
    auto src = [](int o, int in, int out) {
        double s = (o + 0.5) * static_cast<double>(in) / out - 0.5;
        return std::min(std::max(s, 0.0), static_cast<double>(in - 1));
    };
    const double sy = src(oy, h, out_h), sx = src(ox, w, out_w);
    double acc = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double wy = std::max(0.0, 1.0 - std::abs(sy - y));
            const double wx = std::max(0.0, 1.0 - std::abs(sx - x));
            acc += wy * wx * img[static_cast<std::size_t>(y * w + x)];
        }
    return acc;
}

}  // namespace

TEST(BilinearResize, SameSizeIsIdentity) {
    const auto x = random_tensor({2, 3, 5, 7}, 91);
    const auto y = bilinear_resize(x, 5, 7);
    for (std::size_t i = 0; i < x.size(); ++i)
        EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(BilinearResize, ConstantsPreserved) {
    const Tensor<double> x({1, 2, 4, 6}, 0.375);
    for (auto [h, w] : {std::pair{1, 1}, {3, 9}, {13, 2}, {8, 12}})
        for (bool ac : {false, true}) {
            const auto y = bilinear_resize(x, h, w, ac);
            for (double v : y.data())
                EXPECT_EQ(v, 0.375);
        }
}

TEST(BilinearResize, TwoByTwoUpsampleMatchesPerPixelOracle) {
    const std::vector<double> img{0.0, 0.0, 4.0, 4.0};
    const Tensor<double> x({1, 1, 2, 2}, img);
    const auto y = bilinear_resize(x, 4, 4);
    const double rows[4] = {0.0, 1.0, 3.0, 4.0};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            EXPECT_DOUBLE_EQ(y.at({0, 0, r, c}), rows[r]);
            EXPECT_DOUBLE_EQ(y.at({0, 0, r, c}), oracle_bilinear(img, 2, 2, r, c, 4, 4));
        }
}

TEST(BilinearResize, RandomCasesMatchOracle) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const int h = 2 + static_cast<int>(seed % 5), w = 3 + static_cast<int>((seed * 7) % 6);
        const int oh = 1 + static_cast<int>((seed * 3) % 9), ow = 1 + static_cast<int>((seed * 5) % 11);
        const auto x = random_tensor({1, 1, h, w}, 200 + seed);
        const std::vector<double> img(x.data().begin(), x.data().end());
        const auto y = bilinear_resize(x, oh, ow);
        for (int r = 0; r < oh; ++r)
            for (int c = 0; c < ow; ++c)
                EXPECT_NEAR(y.at({0, 0, r, c}), oracle_bilinear(img, h, w, r, c, oh, ow), 1e-12);
    }
}

TEST(BilinearResize, IsLinear) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto x = random_tensor({1, 2, 5, 4}, 300 + seed);
        const auto z = random_tensor({1, 2, 5, 4}, 400 + seed);
        const double a = 0.7 + 0.1 * static_cast<double>(seed), b = -1.3;
        const auto combo = add(scale(x, a), scale(z, b));
        const auto lhs = bilinear_resize(combo, 9, 3);
        const auto rx = bilinear_resize(x, 9, 3), rz = bilinear_resize(z, 9, 3);
        for (std::size_t k = 0; k < lhs.size(); ++k)
            EXPECT_NEAR(lhs.data()[k], a * rx.data()[k] + b * rz.data()[k], 1e-10);
    }
}

TEST(BilinearResize, GradientsMatchFiniteDifferences) {
    auto x = random_param({2, 2, 5, 6}, 92);
    for (auto [h, w] : {std::pair{2, 3}, {11, 13}, {5, 6}}) {
        const auto r = check([&, h = h, w = w] { return project(bilinear_resize(x, h, w), 93); }, {{"x", x}});
        EXPECT_LE(r.max_rel_error, kGradTol);
    }
}

TEST(Resample, ZeroPaddingOutsideSource) {
    const Tensor<double> x({1, 1, 2, 2}, 1.0);
    const AxisMap m{1.0, -1.0};  // shift by one pixel
    const auto y = resample(x, 3, 3, std::span<const AxisMap>(&m, 1), std::span<const AxisMap>(&m, 1), Padding::Zeros);
    EXPECT_EQ(y.at({0, 0, 0, 0}), 0.0);
    EXPECT_EQ(y.at({0, 0, 1, 1}), 1.0);
    EXPECT_EQ(y.at({0, 0, 2, 2}), 1.0);
    const AxisMap half{1.0, -0.5};
    const auto z = resample(x, 1, 1, std::span<const AxisMap>(&half, 1), std::span<const AxisMap>(&half, 1),
                            Padding::Zeros);
    EXPECT_DOUBLE_EQ(z.data()[0], 0.25);
}

TEST(Resample, PerItemMapsAndGradients) {
    auto x = random_param({2, 2, 6, 6}, 95);
    const std::vector<AxisMap> rows{{0.5, 1.25}, {2.0, -0.5}}, cols{{0.75, 0.3}, {1.0, 2.0}};
    for (auto pad : {Padding::Zeros, Padding::Border}) {
        const auto r = check([&] { return project(resample<double>(x, 4, 5, rows, cols, pad), 96); }, {{"x", x}});
        EXPECT_LE(r.max_rel_error, kGradTol);
    }
}

TEST(MseLoss, Values) {
    const auto p = random_tensor({3, 4}, 1);
    EXPECT_EQ(mse_loss(p, p.detach()).item(), 0.0);
    EXPECT_EQ(mse_loss(Tensor<double>({1}, 3.0), Tensor<double>({1}, 1.0)).item(), 4.0);
    EXPECT_THROW(mse_loss(p, random_tensor({4, 3}, 2)), DimensionError);
}

TEST(MseLoss, GradientIsTwiceResidualOverN) {
    auto p = random_param({3, 4}, 3);
    const auto t = random_tensor({3, 4}, 4);
    const auto r = finite_difference_check([&] { return mse_loss(p, t); }, {{"pred", p}});
    EXPECT_LE(r.max_rel_error, 1e-6);
    for (std::size_t k = 0; k < p.size(); ++k)
        EXPECT_NEAR(p.grad()[k], 2.0 * (p.data()[k] - t.data()[k]) / 12.0, 1e-15);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    auto w = random_param({3, 2}, 5);
    const std::vector<double> before(w.data().begin(), w.data().end());
    ParameterList<double> params{{"w", w, true}};
    w.zero_grad();
    AdamState<double> st;
    adam_step(params, st);
    adam_step(params, st);
    EXPECT_EQ(st.step, 2u);
    EXPECT_EQ(std::vector<double>(w.data().begin(), w.data().end()), before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    auto w = Tensor<double>::parameter({1}, {0.5});
    ParameterList<double> params{{"w", w, true}};
    w.zero_grad();
    w.mutable_grad()[0] = 1.0;
    AdamState<double> st;
    EXPECT_EQ(st.lr, 2e-4);
    EXPECT_EQ(st.beta1, 0.9);
    EXPECT_EQ(st.beta2, 0.999);
    EXPECT_EQ(st.eps, 1e-8);
    adam_step(params, st);
    EXPECT_NEAR(w.data()[0] - 0.5, -st.lr / (1.0 + st.eps), 1e-15);
}

TEST(Adam, QuadraticConvergesWithDecayingEnvelope) {
    auto w = Tensor<double>::parameter({1}, {0.0});
    ParameterList<double> params{{"w", w, true}};
    AdamState<double> st;
    st.lr = 0.1;
    std::vector<double> dist;
    for (int i = 0; i < 100; ++i) {
        w.zero_grad();
        const auto d = sub(w, Tensor<double>({1}, 3.0));
        mul(d, d).backward();
        adam_step(params, st);
        dist.push_back(std::abs(w.data()[0] - 3.0));
    }
    // reference trajectory from an independent scalar Adam run (double)
    EXPECT_NEAR(w.data()[0], 2.9806554375278123, 1e-9);
    for (int i = 1; i < 39; ++i)
        EXPECT_LT(dist[i], dist[i - 1]) << "approach phase step " << i;
    auto window_max = [&](int a, int b) { return *std::max_element(dist.begin() + a, dist.begin() + b); };
    EXPECT_LT(window_max(60, 80), window_max(40, 60));
    EXPECT_LT(window_max(80, 100), window_max(60, 80));
    EXPECT_LT(dist.back(), 0.025);
}

TEST(Adam, MissingGradientNamesParameter) {
    auto w = Tensor<double>::parameter({2}, {1.0, 2.0});
    ParameterList<double> params{{"head.weight", w, true}};
    AdamState<double> st;
    try {
        adam_step(params, st);
        FAIL() << "expected an error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("head.weight"), std::string::npos);
    }
}

TEST(Adam, FixedSeedRunsAreBitwiseIdentical) {
    auto run = [] {
        Rng rng(99);
        auto conv = Conv2d<float>::make(2, 3, 3, 1, 1, true, rng);
        ParameterList<float> params;
        conv.collect("conv", params);
        AdamState<float> st;
        st.lr = 1e-2;
        Tensor<float> x({2, 2, 6, 6});
        std::normal_distribution<float> d;
        for (auto& v : x.mutable_data())
            v = d(rng);
        for (int i = 0; i < 25; ++i) {
            zero_grads(params);
            const auto y = conv(x);
            mean(mul(y, y)).backward();
            adam_step(params, st);
        }
        std::vector<float> out;
        for (const auto& p : params)
            out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
        return out;
    };
    const auto a = run(), b = run();
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0);
}

TEST(FiniteDifference, LinearOpIsNearMachinePrecision) {
    auto x = random_param({4, 5}, 1);
    const auto r = finite_difference_check([&] { return project(scale(x, 3.0), 2); }, {{"x", x}});
    EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(FiniteDifference, ConvReluMseChain) {
    auto x = random_param({1, 2, 6, 6}, 3);
    auto w = random_param({3, 2, 3, 3}, 4);
    const auto t = random_tensor({1, 3, 6, 6}, 5);
    const auto r = finite_difference_check([&] { return mse_loss(relu(conv2d(x, w, Tensor<double>{}, 1, 1)), t); },
                                           {{"x", x}, {"w", w}});
    EXPECT_LE(r.max_rel_error, kGradTol);
    EXPECT_GT(r.checked, 0u);
}

TEST(FiniteDifference, DetectsCorruptedGradient) {
    auto x = random_param({6}, 6);
    auto buggy_double = [](const Tensor<double>& in) {
        std::vector<double> out(in.data().begin(), in.data().end());
        for (auto& v : out)
            v *= 2.0;
        return make_result<double>("buggy_double", in.shape(), std::move(out), {in}, [](detail::Node<double>& self) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t k = 0; k < g.size(); ++k)
                g[k] += 2.0 * 1.01 * self.grad[k];
        });
    };
    const auto r = finite_difference_check([&] { return project(buggy_double(x), 7); }, {{"x", x}});
    EXPECT_GE(r.max_rel_error, 5e-3);
    EXPECT_FALSE(r.passed(kGradTol));
}

TEST(FiniteDifference, NonFiniteLossRejected) {
    auto x = Tensor<double>::parameter({1}, {1.0});
    EXPECT_THROW(finite_difference_check(
                     [&] { return scale(x, std::numeric_limits<double>::infinity()); }, {{"x", x}}),
                 NumericError);
}

TEST(FiniteDifference, KinkCrossingsAreSkippedNotMiscounted) {
    // x[0] sits within h of the ReLU kink
    auto x = Tensor<double>::parameter({2}, {2e-6, 0.5});
    const auto r = finite_difference_check([&] { return sum(relu(x)); }, {{"x", x}});
    EXPECT_EQ(r.skipped_nonsmooth, 1u);
    EXPECT_EQ(r.checked, 1u);
    EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(Autograd, GradAccumulatesAcrossUses) {
    auto x = Tensor<double>::parameter({1}, {3.0});
    const auto y = add(mul(x, x), x);  // x^2 + x
    y.backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
    EXPECT_THROW(random_param({2}, 1).backward(), DimensionError);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
    auto x = Tensor<double>::parameter({1}, {3.0});
    NoGradGuard guard;
    const auto y = mul(x, x);
    EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, RandomShapeSweepTwentySeeds) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        std::uniform_int_distribution<int> ext(2, 5);
        const int n = ext(rng) - 1, c = ext(rng), h = ext(rng) + 1, w = ext(rng) + 1, o = ext(rng);
        auto x = random_param({n, c, h, w}, 1000 + seed);
        auto k = random_param({o, c, 3, 3}, 2000 + seed);
        auto gamma = random_param({o}, 3000 + seed, 0.5, 1.5);
        auto beta = random_param({o}, 4000 + seed);
        Tensor<double> rm({o}, 0.0), rv({o}, 1.0);
        const auto r = finite_difference_check(
            [&] {
                auto y = conv2d(x, k, Tensor<double>{}, 1 + static_cast<int>(seed % 2), 1);
                y = relu(batchnorm2d(y, gamma, beta, rm, rv, true));
                y = bilinear_resize(y, h + 1, w - 1);
                auto flat = reshape(y, {y.dim(0), y.dim(1), y.dim(2) * y.dim(3)});
                return project(softmax(flat, 2), 5000 + seed);
            },
            {{"x", x}, {"k", k}, {"gamma", gamma}, {"beta", beta}});
        EXPECT_LE(r.max_rel_error, kGradTol) << "seed " << seed << " worst " << r.worst_input;
    }
}

TEST(Checkpoint, RoundTripAndErrors) {
    const auto dir = zian::test::scratch_dir("ckpt");
    Rng rng(3);
    auto conv = Conv2d<double>::make(2, 3, 3, 1, 1, true, rng);
    auto bn = BatchNorm2d<double>::make(3);
    ParameterList<double> params;
    conv.collect("conv", params);
    bn.collect("bn", params);
    CheckpointHeader header{"f64", 42, "abc123", "[model]\nablation=full\n"};
    save_checkpoint(dir / "a.ckpt", header, params);

    const auto ck = load_checkpoint(dir / "a.ckpt");
    EXPECT_EQ(ck.header.precision, "f64");
    EXPECT_EQ(ck.header.seed, 42u);
    EXPECT_EQ(ck.header.config_hash, "abc123");
    EXPECT_EQ(ck.header.config_text, header.config_text);
    ASSERT_EQ(ck.order.size(), params.size());
    EXPECT_FALSE(ck.entries.at("bn.running_mean").trainable);

    Rng other(4);
    auto conv2 = Conv2d<double>::make(2, 3, 3, 1, 1, true, other);
    auto bn2 = BatchNorm2d<double>::make(3);
    ParameterList<double> params2;
    conv2.collect("conv", params2);
    bn2.collect("bn", params2);
    apply_checkpoint(ck, params2);
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t k = 0; k < params[i].tensor.size(); ++k)
            EXPECT_EQ(params2[i].tensor.data()[k], static_cast<double>(static_cast<float>(params[i].tensor.data()[k])));

    auto wrong = Conv2d<double>::make(2, 4, 3, 1, 1, true, other);
    ParameterList<double> params3;
    wrong.collect("conv", params3);
    EXPECT_THROW(apply_checkpoint(ck, params3), CheckpointError);

    std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
    EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), CheckpointError);
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
}
