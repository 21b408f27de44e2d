#include <algorithm>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "grad_cases.hpp"
#include "helpers.hpp"
#include "ssa/checkpoint.hpp"
#include "ssa/errors.hpp"
#include "ssa/model.hpp"

using namespace ssa;

namespace {

std::size_t total(Model& m) { return m.param_count(); }

double rel(double a, double b) { return std::abs(a - b) / b; }

}  // namespace

TEST_CASE("full-size parameter counts are near the published totals") {
    Model standard(ModelConfig::standard());
    Model reduced(ModelConfig::reduced());
    Model baseline(ModelConfig::baseline());
    const double s = static_cast<double>(total(standard));
    const double r = static_cast<double>(total(reduced));
    const double b = static_cast<double>(total(baseline));
    CHECK(rel(s, 3.8e6) <= 0.08);
    CHECK(rel(r, 3.1e6) <= 0.08);
    CHECK(rel(b, 4.0e6) <= 0.08);
    const double red_s = (b - s) / b, red_r = (b - r) / b;
    CHECK(red_s >= 0.02);
    CHECK(red_s <= 0.08);
    CHECK(red_r >= 0.16);
    CHECK(red_r <= 0.24);
}

TEST_CASE("audit rows sum to the total") {
    Model m(ModelConfig::tiny());
    auto rows = audit_parameters(m);
    REQUIRE(rows.back().module == "total");
    std::size_t sum = 0;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) sum += rows[i].params;
    CHECK(sum == rows.back().params);
    CHECK(sum == m.param_count());
}

TEST_CASE("parameter names are stable and readable") {
    Model m(ModelConfig::standard());
    std::vector<std::string> names;
    m.visit_parameters([&](Parameter<float>& p) { names.push_back(p.name); });
    CHECK(std::find(names.begin(), names.end(), "encoder.level3.conv1.depthwise.weight") != names.end());
    CHECK(std::find(names.begin(), names.end(), "head.bias") != names.end());
    std::sort(names.begin(), names.end());
    CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
}

TEST_CASE("output shapes for every output count") {
    for (std::size_t outputs : {1, 6, 12}) {
        Model m(ModelConfig::tiny(12, outputs));
        auto y = m.forward(testutil::random_tensor<float>(Shape{2, 12, 288, 288}, outputs, 0, 1), Pass<float>{});
        CHECK(y.shape() == Shape{2, outputs, 288, 288});
    }
    ModelConfig cloud = ModelConfig::tiny(4, 6);
    Model m(cloud);
    auto y = m.forward(testutil::random_tensor<float>(Shape{1, 4, 256, 256}, 3, 0, 1), Pass<float>{});
    CHECK(y.shape() == Shape{1, 6, 256, 256});
}

TEST_CASE("full-width configs produce the right shape on a small input") {
    for (const auto& cfg : {ModelConfig::standard(6), ModelConfig::reduced(1), ModelConfig::baseline(12)}) {
        Model m(cfg);
        auto y = m.forward(testutil::random_tensor<float>(Shape{1, 12, 32, 32}, 4, 0, 1), Pass<float>{});
        CHECK(y.shape() == Shape{1, cfg.out_channels, 32, 32});
    }
}

TEST_CASE("forward rejects wrong channels and non-divisible sizes") {
    Model m(ModelConfig::tiny());
    CHECK_THROWS_AS(m.forward(Tensor(Shape{1, 11, 32, 32}), Pass<float>{}), DimensionError);
    CHECK_THROWS_AS(m.forward(Tensor(Shape{1, 12, 40, 32}), Pass<float>{}), DimensionError);
}

TEST_CASE("same seed builds identical weights") {
    Model a(ModelConfig::tiny()), b(ModelConfig::tiny());
    auto x = testutil::random_tensor<float>(Shape{1, 12, 32, 32}, 9, 0, 1);
    auto ya = a.forward(x, Pass<float>{});
    auto yb = b.forward(x, Pass<float>{});
    CHECK(std::memcmp(ya.ptr(), yb.ptr(), ya.numel() * sizeof(float)) == 0);
    ModelConfig other = ModelConfig::tiny();
    other.seed = 1;
    Model c(other);
    CHECK(max_abs_diff(ya, c.forward(x, Pass<float>{})) > 0.0);
}

TEST_CASE("invalid configs are rejected with a configuration error") {
    ModelConfig c = ModelConfig::standard();
    c.kernels_per_layer = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig::standard();
    c.sa_groups[2] = 3;
    CHECK_THROWS_AS(Model{c}, ConfigError);
    c = ModelConfig::standard();
    c.conv_groups[0] = 7;
    CHECK_THROWS_AS(Model{c}, ConfigError);
    c = ModelConfig::standard();
    c.widths.pop_back();
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config key=value round trip") {
    for (const auto& c : {ModelConfig::standard(), ModelConfig::baseline(1), ModelConfig::tiny(4, 6)}) {
        CHECK(ModelConfig::from_kv(c.to_kv()) == c);
    }
    CHECK_THROWS_AS(ModelConfig::from_kv("widths=8,16\nbogus=1\n"), Error);
}

TEST_CASE("persistence repeats the last input frame") {
    auto x = testutil::random_tensor<float>(Shape{2, 4, 8, 8}, 10, 0, 1);
    auto y = persistence_predict(x, 3);
    REQUIRE(y.shape() == Shape{2, 3, 8, 8});
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t k = 0; k < 3; ++k)
            CHECK(std::memcmp(y.plane(n, k), x.plane(n, 3), 64 * sizeof(float)) == 0);
}

TEST_CASE("tiny model end-to-end gradient") {
    auto c = testutil::tiny_model_grad_case(1, 6);
    auto r = testutil::run_case(c, 1e-3, 1);
    INFO(r.summary());
    CHECK(r.passed);
}

TEST_CASE("checkpoint round trip reproduces the model exactly") {
    auto dir = testutil::temp_dir("ckpt");
    Model m(ModelConfig::tiny());
    OptimizerState<float> opt;
    opt.step = 3;
    opt.lr = 1e-4;
    m.visit_parameters([&](Parameter<float>& p) {
        opt.moments[p.name] = {testutil::random_tensor<float>(p.value.shape(), 1),
                               testutil::random_tensor<float>(p.value.shape(), 2, 0, 1)};
    });
    auto x = testutil::random_tensor<float>(Shape{2, 12, 32, 32}, 11, 0, 1);
    m.forward(x, Pass<float>{Mode::Train});  // moves the batch-norm statistics
    save_checkpoint(m, &opt, CheckpointMeta{7, 0.25, 42.0}, dir / "a.ssac");
    auto ck = load_checkpoint(dir / "a.ssac");
    CHECK(ck.config == m.config());
    CHECK(ck.meta.epoch == 7);
    CHECK(ck.meta.best_val_loss == 0.25);
    CHECK(ck.meta.scale == 42.0);
    CHECK(ck.optimizer.step == 3);
    CHECK(ck.optimizer.lr == 1e-4);
    CHECK(ck.optimizer.moments.size() == opt.moments.size());
    auto ya = m.forward(x, Pass<float>{});
    auto yb = ck.model->forward(x, Pass<float>{});
    CHECK(std::memcmp(ya.ptr(), yb.ptr(), ya.numel() * sizeof(float)) == 0);

    save_checkpoint(*ck.model, &ck.optimizer, ck.meta, dir / "b.ssac");
    CHECK(testutil::read_bytes(dir / "a.ssac") == testutil::read_bytes(dir / "b.ssac"));
}

TEST_CASE("checkpoint load errors") {
    auto dir = testutil::temp_dir("ckpt_bad");
    ModelConfig km3 = ModelConfig::tiny();
    Model m(km3);
    save_checkpoint(m, nullptr, {}, dir / "a.ssac");

    ModelConfig km2 = km3;
    km2.kernels_per_layer = 2;
    CHECK_THROWS_AS(load_checkpoint(dir / "a.ssac", km2), DimensionError);
    CHECK_NOTHROW(load_checkpoint(dir / "a.ssac", km3));

    const std::string good = testutil::read_bytes(dir / "a.ssac");
    auto write = [&](const std::string& bytes) {
        std::ofstream(dir / "x.ssac", std::ios::binary) << bytes;
        return dir / "x.ssac";
    };
    std::string bad = good;
    bad[0] = 'Z';
    CHECK_THROWS_AS(load_checkpoint(write(bad)), FormatError);
    bad = good;
    bad[4] = 2;
    CHECK_THROWS_AS(load_checkpoint(write(bad)), FormatError);
    CHECK_THROWS_AS(load_checkpoint(write(good.substr(0, good.size() / 2))), FormatError);
    CHECK_THROWS_AS(load_checkpoint(write(good + "x")), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ssac"), Error);
}
