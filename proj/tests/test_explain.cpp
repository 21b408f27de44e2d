#include <cstring>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "ssa/errors.hpp"
#include "ssa/explain.hpp"

using namespace ssa;

namespace {

std::vector<std::string> sweep_modules() {
    std::vector<std::string> names;
    for (const auto& l : default_sweep_layers()) names.push_back(l.module);
    return names;
}

}  // namespace

TEST_CASE("default sweep lists 24 distinct layers") {
    auto layers = default_sweep_layers();
    CHECK(layers.size() == 24);
    std::set<std::string> labels, modules;
    for (const auto& l : layers) {
        labels.insert(l.label);
        modules.insert(l.module);
    }
    CHECK(labels.size() == 24);
    CHECK(modules.size() == 24);
    CHECK(labels.count("attention.enc5") == 1);
    CHECK(labels.count("block.dec1") == 1);
}

TEST_CASE("sweep heatmaps are normalized at input resolution") {
    Model m(ModelConfig::tiny());
    auto x = testutil::random_tensor<float>(Shape{1, 12, 288, 288}, 3, 0, 1);
    auto maps = grad_cam(m, x, sweep_modules());
    REQUIRE(maps.size() == 24);
    for (const auto& h : maps) {
        CHECK(h.values.shape() == Shape{1, 1, 288, 288});
        double lo = 1, hi = 0;
        for (double v : h.values.data()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(lo >= 0.0);
        CHECK(hi <= 1.0);
        if (!h.all_zero) CHECK(hi == 1.0);
    }
    CHECK(maps[0].source_h == 288);
    std::size_t enc5 = 0;
    for (std::size_t i = 0; i < 24; ++i)
        if (default_sweep_layers()[i].label == "block.enc5") enc5 = i;
    CHECK(maps[enc5].source_h == 18);
}

TEST_CASE("heatmaps are invariant to positive target scaling") {
    SSAUNet<double> m(ModelConfig::tiny());
    auto x = testutil::random_tensor<double>(Shape{1, 12, 32, 32}, 4, 0, 1);
    auto a = grad_cam(m, x, sweep_modules(), CamTarget{std::nullopt, 1.0});
    auto b = grad_cam(m, x, sweep_modules(), CamTarget{std::nullopt, 37.5});
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        INFO(a[i].layer);
        CHECK(max_abs_diff(a[i].values, b[i].values) <= 1e-10);
    }
}

TEST_CASE("grad_cam leaves the model untouched") {
    Model m(ModelConfig::tiny());
    auto x = testutil::random_tensor<float>(Shape{1, 12, 32, 32}, 5, 0, 1);
    auto before = m.forward(x, Pass<float>{});
    grad_cam(m, x, sweep_modules(), CamTarget{2, 1.0});
    auto after = m.forward(x, Pass<float>{});
    CHECK(std::memcmp(before.ptr(), after.ptr(), before.numel() * sizeof(float)) == 0);
    m.visit_parameters([](Parameter<float>& p) {
        for (float g : p.grad.data()) REQUIRE(g == 0.0f);
    });
}

TEST_CASE("grad_cam errors") {
    Model m(ModelConfig::tiny());
    auto x = testutil::random_tensor<float>(Shape{1, 12, 32, 32}, 6, 0, 1);
    try {
        grad_cam(m, x, "encoder.level9");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("encoder.level1.attention") != std::string::npos);
    }
    CHECK_THROWS_AS(grad_cam(m, testutil::random_tensor<float>(Shape{2, 12, 32, 32}, 6), "head"), DimensionError);
}

TEST_CASE("zero layer output gives a flagged zero map") {
    Model m(ModelConfig::tiny());
    m.encoder_block(1).conv2().pointwise().visit_parameters([](Parameter<float>& p) { p.value.fill(0.0f); });
    auto h = grad_cam(m, testutil::random_tensor<float>(Shape{1, 12, 32, 32}, 7, 0, 1), "encoder.level1.conv2");
    CHECK(h.all_zero);
    for (double v : h.values.data()) CHECK(v == 0.0);
}

TEST_CASE("single channel map is the normalized rectified activation") {
    auto a = testutil::random_tensor<double>(Shape{1, 1, 6, 6}, 8);
    TensorD g(Shape{1, 1, 6, 6}, 0.3);
    auto h = cam_from(a, g, 6, 6);
    double hi = 0;
    for (double v : a.data()) hi = std::max(hi, v);
    for (std::size_t i = 0; i < 36; ++i) CHECK(h.values.ptr()[i] == doctest::Approx(std::max(0.0, a.ptr()[i]) / hi));

    // a negative weight flips the sign before the rectifier
    for (double& v : g.data()) v = -0.3;
    auto n = cam_from(a, g, 6, 6);
    double lo = 0;
    for (double v : a.data()) lo = std::min(lo, v);
    for (std::size_t i = 0; i < 36; ++i) CHECK(n.values.ptr()[i] == doctest::Approx(std::max(0.0, -a.ptr()[i]) / -lo));
}

TEST_CASE("pgm round trip and quantization") {
    auto dir = testutil::temp_dir("pgm");
    CHECK(quantize(1.0) == 255);
    CHECK(quantize(0.0) == 0);
    CHECK(quantize(2.0) == 255);
    CHECK(quantize(-1.0) == 0);
    auto map = testutil::random_tensor<double>(Shape{1, 1, 7, 9}, 9, 0, 1);
    write_pgm(map, dir / "m.pgm");
    auto img = read_pgm(dir / "m.pgm");
    REQUIRE(img.width == 9);
    REQUIRE(img.height == 7);
    for (std::size_t i = 0; i < 63; ++i) CHECK(img.pixels[i] == quantize(map.ptr()[i]));

    write_pgm(TensorD(Shape{1, 1, 3, 3}), dir / "z.pgm");
    for (auto p : read_pgm(dir / "z.pgm").pixels) CHECK(p == 0);

    write_composite({map, map}, dir / "c.pgm");
    auto c = read_pgm(dir / "c.pgm");
    CHECK(c.width == 9 * 2 + 2);
    CHECK(c.pixels[9] == 0);
}
