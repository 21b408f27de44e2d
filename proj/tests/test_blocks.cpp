#include "doctest.h"
#include "helpers.hpp"
#include "ssa/blocks.hpp"
#include "ssa/errors.hpp"

using namespace ssa;

namespace {

template <typename M>
void fill_params(M& m, double value) {
    m.visit_parameters([&](Parameter<double>& p) { p.value.fill(value); });
}

TensorD eval(Module<double>& m, const TensorD& x) { return m.forward(x, Pass<double>{}); }

}  // namespace

TEST_CASE("depthwise separable parameter count") {
    Rng rng(1);
    DepthwiseSeparableConv<double> dsc("dsc", 4, 8, 3, rng);
    CHECK(dsc.param_count() == 224);
    CHECK(DepthwiseSeparableConv<double>::expected_params(4, 8, 3) == 224);
}

TEST_CASE("shuffled separable parameter count") {
    Rng rng(1);
    ShuffledDepthwiseSeparableConv<double> s("s", 32, 64, 3, 16, rng);
    DepthwiseSeparableConv<double> d("d", 32, 64, 3, rng);
    // 32*3*9 + 96 + 64*96/16 + 64 and 32*3*9 + 96 + 64*96 + 64
    CHECK(s.param_count() == 1408);
    CHECK(d.param_count() == 7168);
    CHECK_THROWS_AS(ShuffledDepthwiseSeparableConv<double>("bad", 5, 8, 1, 2, rng), ConfigError);
    CHECK_THROWS_AS(ShuffledDepthwiseSeparableConv<double>("bad", 4, 6, 1, 4, rng), ConfigError);
}

TEST_CASE("zero weights give the bias broadcast") {
    Rng rng(2);
    DepthwiseSeparableConv<double> dsc("dsc", 3, 2, 2, rng);
    fill_params(dsc, 0.0);
    dsc.pointwise().visit_parameters([](Parameter<double>& p) {
        if (p.name.ends_with("bias")) p.value.fill(0.75);
    });
    auto y = eval(dsc, testutil::random_tensor(Shape{1, 3, 4, 4}, 3));
    for (double v : y.data()) CHECK(v == 0.75);
}

TEST_CASE("identity depthwise reduces to a pointwise convolution") {
    Rng rng(3);
    DepthwiseSeparableConv<double> dsc("dsc", 3, 5, 1, rng);
    TensorD pw_w, pw_b;
    dsc.depthwise().visit_parameters([](Parameter<double>& p) {
        p.value.fill(0.0);
        if (p.name.ends_with("weight"))
            for (std::size_t c = 0; c < p.value.shape().n; ++c) p.value(c, 0, 1, 1) = 1.0;
    });
    dsc.pointwise().visit_parameters([&](Parameter<double>& p) {
        (p.name.ends_with("weight") ? pw_w : pw_b) = p.value;
    });
    auto x = testutil::random_tensor(Shape{2, 3, 4, 5}, 4);
    auto ref = testutil::naive_conv(x, pw_w, &pw_b, 0, 1);
    CHECK(max_abs_diff(eval(dsc, x), ref) <= 1e-12);
}

TEST_CASE("shuffled separable with g = 1 equals the classic one") {
    Rng r1(5), r2(6);
    ShuffledDepthwiseSeparableConv<double> s("s", 4, 6, 2, 1, r1);
    DepthwiseSeparableConv<double> d("d", 4, 6, 2, r2);
    std::vector<TensorD> values;
    s.visit_parameters([&](Parameter<double>& p) { values.push_back(p.value); });
    std::size_t i = 0;
    d.visit_parameters([&](Parameter<double>& p) { p.value = values[i++]; });
    auto x = testutil::random_tensor(Shape{2, 4, 5, 5}, 7);
    CHECK(max_abs_diff(eval(s, x), eval(d, x)) == 0.0);
}

TEST_CASE("shuffled pointwise outputs are interleaved across groups") {
    Rng rng(8);
    const std::size_t g = 4, out = 8;
    ShuffledDepthwiseSeparableConv<double> s("s", 4, out, 1, g, rng);
    s.pointwise().visit_parameters([&](Parameter<double>& p) {
        p.value.fill(0.0);
        if (p.name.ends_with("bias"))
            for (std::size_t c = 0; c < out; ++c) p.value(0, c, 0, 0) = static_cast<double>(c / (out / g));
    });
    auto y = eval(s, testutil::random_tensor(Shape{1, 4, 3, 3}, 9));
    for (std::size_t j = 0; j < out; ++j) CHECK(y(0, j, 1, 1) == static_cast<double>(j % g));
}

TEST_CASE("shuffle attention parameter count and saturated gates") {
    ShuffleAttention<double> sa("sa", 64, 2);
    CHECK(sa.param_count() == 96);
    CHECK_THROWS_AS(ShuffleAttention<double>("bad", 12, 4), ConfigError);

    ShuffleAttention<double> small("sa", 8, 2);
    auto x = testutil::random_tensor(Shape{1, 8, 4, 4}, 10);
    small.channel_weight().value.fill(0.0);
    small.spatial_weight().value.fill(0.0);
    small.channel_bias().value.fill(60.0);
    small.spatial_bias().value.fill(60.0);
    CHECK(max_abs_diff(eval(small, x), channel_shuffle(x, 2)) <= 1e-15);

    small.channel_bias().value.fill(0.0);
    small.spatial_bias().value.fill(0.0);
    TensorD half = x;
    for (double& v : half.data()) v *= 0.5;
    CHECK(max_abs_diff(eval(small, x), channel_shuffle(half, 2)) <= 1e-15);
}

TEST_CASE("cbam with zero weights quarters its input") {
    Rng rng(11);
    Cbam<double> cbam("cbam", 64, 16, rng);
    CHECK(cbam.param_count() == 2 * 64 * 4 + 4 + 64 + 7 * 7 * 2 + 1);
    fill_params(cbam, 0.0);
    auto x = testutil::random_tensor(Shape{2, 64, 5, 5}, 12);
    auto y = eval(cbam, x);
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.ptr()[i] == doctest::Approx(x.ptr()[i] / 4).epsilon(1e-14));
}

TEST_CASE("shuffle attention is lighter than cbam at every model width") {
    Rng rng(13);
    for (std::size_t c : {64, 128, 256, 512, 1024})
        for (std::size_t g : {1, 2, 4, 8, 16, 32})
            CHECK(ShuffleAttention<double>::expected_params(c, g) < Cbam<double>::expected_params(c, 16));
}

TEST_CASE("double conv block parameter count is the sum of its parts") {
    Rng rng(14);
    DoubleConvBlock<double> classic("c", DoubleConvSpec{16, 32, 0, 2, BlockVariant::Classic, 1}, rng);
    CHECK(classic.param_count() == DepthwiseSeparableConv<double>::expected_params(16, 32, 2) +
                                       DepthwiseSeparableConv<double>::expected_params(32, 32, 2) + 4 * 32);
    DoubleConvBlock<double> shuffled("s", DoubleConvSpec{16, 32, 0, 3, BlockVariant::Shuffled, 4}, rng);
    CHECK(shuffled.param_count() == ShuffledDepthwiseSeparableConv<double>::expected_params(16, 32, 3, 4) +
                                        DepthwiseSeparableConv<double>::expected_params(32, 32, 3) + 4 * 32);
    DoubleConvBlock<double> mid("m", DoubleConvSpec{64, 16, 32, 2, BlockVariant::Classic, 1}, rng);
    CHECK(mid.param_count() == DepthwiseSeparableConv<double>::expected_params(64, 32, 2) +
                                   DepthwiseSeparableConv<double>::expected_params(32, 16, 2) + 2 * 32 + 2 * 16);
}

TEST_CASE("blocks reject a wrong channel count") {
    Rng rng(15);
    DepthwiseSeparableConv<double> dsc("dsc", 3, 4, 1, rng);
    CHECK_THROWS_AS(eval(dsc, TensorD(Shape{1, 2, 4, 4})), DimensionError);
    ShuffleAttention<double> sa("sa", 8, 2);
    CHECK_THROWS_AS(eval(sa, TensorD(Shape{1, 6, 4, 4})), DimensionError);
}
