#include <cmath>

#include "doctest.h"
#include "grad_cases.hpp"
#include "helpers.hpp"
#include "ssa/errors.hpp"
#include "ssa/module.hpp"
#include "ssa/ops.hpp"

using namespace ssa;

TEST_CASE("conv2d matches the direct loop on varied shapes") {
    int cases = 0;
    std::uint64_t seed = 100;
    for (std::size_t groups : {1, 2, 4})
        for (std::size_t k : {1, 3, 5})
            for (std::size_t pad : {0, 1, 2}) {
                if (pad * 2 + 4 < k) continue;
                const std::size_t cin = 4, cout = groups == 4 ? 8 : 6 - (6 % groups);
                auto x = testutil::random_tensor(Shape{2, cin, 4 + groups, 5}, ++seed);
                auto w = testutil::random_tensor(Shape{cout, cin / groups, k, k}, ++seed);
                auto b = testutil::random_tensor(Shape{1, cout, 1, 1}, ++seed);
                const bool with_bias = seed % 2 == 0;
                auto y = conv2d(x, w, with_bias ? &b : nullptr, Conv2dParams{1, pad, groups});
                auto ref = testutil::naive_conv(x, w, with_bias ? &b : nullptr, pad, groups);
                REQUIRE(y.shape() == ref.shape());
                CHECK(max_abs_diff(y, ref) <= 1e-10);
                ++cases;
            }
    CHECK(cases >= 20);
}

TEST_CASE("conv2d rejects mismatched channels and groups") {
    auto x = testutil::random_tensor(Shape{1, 4, 5, 5}, 1);
    auto w = testutil::random_tensor(Shape{6, 3, 3, 3}, 2);
    CHECK_THROWS_AS(conv2d<double>(x, w, nullptr, Conv2dParams{1, 1, 1}), DimensionError);
    auto w3 = testutil::random_tensor(Shape{6, 4, 3, 3}, 2);
    CHECK_THROWS_AS(conv2d<double>(x, w3, nullptr, Conv2dParams{1, 1, 3}), DimensionError);
}

TEST_CASE("channel shuffle permutation") {
    const std::vector<std::size_t> expected{0, 3, 1, 4, 2, 5};
    for (std::size_t j = 0; j < 6; ++j) CHECK(shuffle_source_channel(j, 6, 2) == expected[j]);

    TensorD x(Shape{1, 6, 1, 1});
    for (std::size_t c = 0; c < 6; ++c) x(0, c, 0, 0) = static_cast<double>(c);
    auto y = channel_shuffle(x, 2);
    for (std::size_t j = 0; j < 6; ++j) CHECK(y(0, j, 0, 0) == static_cast<double>(expected[j]));
}

TEST_CASE("shuffling with g then c/g restores the input") {
    for (auto [c, g] : {std::pair<std::size_t, std::size_t>{6, 2}, {12, 3}, {16, 4}, {8, 8}}) {
        auto x = testutil::random_tensor(Shape{2, c, 3, 3}, c * 10 + g);
        auto back = channel_shuffle(channel_shuffle(x, g), c / g);
        CHECK(max_abs_diff(x, back) == 0.0);
    }
    CHECK_THROWS_AS(channel_shuffle(testutil::random_tensor(Shape{1, 6, 2, 2}, 1), 4), DimensionError);
}

TEST_CASE("shuffle is a bijection and inverts itself for random (c, g)") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t c = 1 + rng() % 128;
        std::vector<std::size_t> divisors;
        for (std::size_t g = 1; g <= c; ++g)
            if (c % g == 0) divisors.push_back(g);
        const std::size_t g = divisors[rng() % divisors.size()];
        std::vector<int> seen(c, 0);
        for (std::size_t j = 0; j < c; ++j) seen[shuffle_source_channel(j, c, g)] += 1;
        for (int s : seen) REQUIRE(s == 1);
        for (std::size_t j = 0; j < c; ++j)
            CHECK(shuffle_source_channel(shuffle_source_channel(j, c, c / g), c, g) == j);
    }
}

TEST_CASE("bilinear x2 matches the half-pixel scalar formula") {
    auto x = testutil::random_tensor(Shape{1, 2, 3, 5}, 77);
    auto y = bilinear_upsample_x2(x);
    REQUIRE(y.shape() == Shape{1, 2, 6, 10});
    auto coord = [](std::size_t d, std::size_t in, std::size_t& i0, std::size_t& i1, double& f) {
        double s = (static_cast<double>(d) + 0.5) / 2.0 - 0.5;
        if (s < 0) s = 0;
        i0 = static_cast<std::size_t>(std::floor(s));
        if (i0 > in - 1) i0 = in - 1;
        i1 = std::min(i0 + 1, in - 1);
        f = s - static_cast<double>(i0);
    };
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 10; ++j) {
                std::size_t y0, y1, x0, x1;
                double fy, fx;
                coord(i, 3, y0, y1, fy);
                coord(j, 5, x0, x1, fx);
                const double v = (1 - fy) * ((1 - fx) * x(0, c, y0, x0) + fx * x(0, c, y0, x1)) +
                                 fy * ((1 - fx) * x(0, c, y1, x0) + fx * x(0, c, y1, x1));
                CHECK(y(0, c, i, j) == doctest::Approx(v).epsilon(1e-12));
            }
}

TEST_CASE("max pool picks the window maximum") {
    TensorD x(Shape{1, 1, 2, 4}, std::vector<double>{1, 5, -1, 0, 3, 2, -2, -3});
    auto y = max_pool_2x2(x);
    REQUIRE(y.shape() == Shape{1, 1, 1, 2});
    CHECK(y(0, 0, 0, 0) == 5);
    CHECK(y(0, 0, 0, 1) == 0);
    CHECK_THROWS_AS(max_pool_2x2(TensorD(Shape{1, 1, 3, 4})), DimensionError);
}

TEST_CASE("batch norm train output has zero mean and unit variance per channel") {
    auto x = testutil::random_tensor(Shape{4, 3, 5, 5}, 3, -2, 5);
    BatchNormState<double> st(3);
    auto y = batch_norm(x, channel_vector<double>(3, 1), channel_vector<double>(3, 0), st, Mode::Train);
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0, ss = 0;
        for (std::size_t n = 0; n < 4; ++n)
            for (std::size_t p = 0; p < 25; ++p) {
                const double v = y.plane(n, c)[p];
                s += v;
                ss += v * v;
            }
        CHECK(std::abs(s / 100) < 1e-12);
        CHECK(ss / 100 == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(st.running_var(0, c, 0, 0) != 1.0);
    }
}

TEST_CASE("op gradients agree with central differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (const auto& c : testutil::op_grad_cases(seed)) {
            auto r = testutil::run_case(c, 1e-4, seed);
            INFO(c.name << " seed " << seed << ": " << r.summary());
            CHECK(r.passed);
        }
    }
}

TEST_CASE("block gradients agree with central differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (const auto& c : testutil::block_grad_cases(seed)) {
            auto r = testutil::run_case(c, 1e-4, seed);
            INFO(c.name << " seed " << seed << ": " << r.summary());
            CHECK(r.passed);
        }
    }
}
