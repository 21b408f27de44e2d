#include <random>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "ssa/data.hpp"
#include "ssa/errors.hpp"
#include "ssa/evaluation.hpp"
#include "ssa/model.hpp"
#include "ssa/optim.hpp"

using namespace ssa;

namespace {

ConfusionCounts loop_counts(const Tensor& p, const Tensor& t, double thr) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < p.numel(); ++i) {
        const bool a = p.ptr()[i] > thr, b = t.ptr()[i] > thr;
        if (a && b) ++c.tp;
        else if (a) ++c.fp;
        else if (b) ++c.fn;
        else ++c.tn;
    }
    return c;
}

std::vector<SampleWindow> persistence_windows(std::size_t frames, std::uint64_t seed, const SynthParams& sp = {},
                                              std::size_t side = 32, std::size_t stride = 3) {
    auto p = preprocess(synth_generate(frames, side, side, seed, sp), std::nullopt);
    return make_windows(p.sequence, WindowSpec::precipitation(12), stride, p.scale);
}

Predictor persistence(std::size_t outputs) {
    return [outputs](const Tensor& x) { return persistence_predict(x, outputs); };
}

}  // namespace

TEST_CASE("confusion counts equal the pixel loop") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 25; ++trial) {
        const Shape s{1 + rng() % 3, 1 + rng() % 4, 4 + rng() % 5, 4 + rng() % 5};
        auto p = testutil::random_tensor<float>(s, 100 + trial, 0, 1);
        auto t = testutil::random_tensor<float>(s, 200 + trial, 0, 1);
        const double thr = 0.2 + 0.6 * static_cast<double>(trial) / 25;
        CHECK(binarize(p, t, thr) == loop_counts(p, t, thr));
    }
}

TEST_CASE("binarize trivial cases and scale") {
    auto t = testutil::random_tensor<float>(Shape{1, 2, 4, 4}, 1, 0, 1);
    auto same = binarize(t, t, 0.5);
    CHECK(same.fp == 0);
    CHECK(same.fn == 0);
    Tensor hi(t.shape(), 1.0f), lo(t.shape(), 0.0f);
    CHECK(binarize(hi, lo, 0.5).fp == t.numel());
    // scale 10 with threshold 5 is the same as threshold 0.5 on raw values
    CHECK(binarize(t, hi, 5.0, 10.0) == binarize(t, hi, 0.5));
    CHECK(binarize_channel(hi, lo, 1, 0.5).fp == 16);
}

TEST_CASE("metrics from counts") {
    auto m = metrics_from_counts(ConfusionCounts{5, 5, 10, 0});
    CHECK(m.precision == doctest::Approx(0.5));
    CHECK(m.recall == doctest::Approx(1.0));
    CHECK(m.accuracy == doctest::Approx(0.75));
    CHECK(m.f1 == doctest::Approx(2.0 / 3));
    CHECK_FALSE(m.degenerate);

    auto d = metrics_from_counts(ConfusionCounts{0, 0, 7, 0});
    CHECK(d.precision == 0.0);
    CHECK(d.recall == 0.0);
    CHECK(d.f1 == 0.0);
    CHECK(d.accuracy == 1.0);
    CHECK(d.degenerate);

    auto p = metrics_from_counts(ConfusionCounts{4, 0, 6, 0});
    CHECK(p.precision == 1.0);
    CHECK(p.recall == 1.0);
    CHECK(p.accuracy == 1.0);
    CHECK(p.f1 == 1.0);
}

TEST_CASE("pixel mse agrees with the training loss") {
    auto a = testutil::random_tensor<float>(Shape{2, 3, 5, 5}, 1);
    auto b = testutil::random_tensor<float>(Shape{2, 3, 5, 5}, 2);
    CHECK(std::abs(pixel_mse(a, b) - mse_loss(a, b).loss) <= 1e-12);
    CHECK(pixel_mse(a, b, 3.0) == doctest::Approx(9.0 * pixel_mse(a, b)).epsilon(1e-12));
}

TEST_CASE("persistence mse on a constructed window") {
    SampleWindow w;
    w.inputs = Tensor(Shape{1, 2, 2, 2}, std::vector<float>{9, 9, 9, 9, 1, 2, 3, 4});
    w.targets = Tensor(Shape{1, 2, 2, 2}, std::vector<float>{1, 2, 3, 4, 2, 2, 2, 2});
    w.horizon_minutes = {5, 10};
    EvalConfig cfg;
    cfg.scale = 2.0;
    auto rec = evaluate("persistence", persistence(2), {w}, cfg);
    REQUIRE(rec.size() == 3);
    // lead 2 errors are 2 * (-1, 0, 1, 2)
    CHECK(std::abs(rec[0].mse - 0.0) <= 1e-12);
    CHECK(std::abs(rec[1].mse - 6.0) <= 1e-12);
    CHECK(std::abs(rec[2].mse - 3.0) <= 1e-12);
    CHECK(rec[2].is_aggregate());
    CHECK(rec[1].horizon_minutes == 10);
}

TEST_CASE("persistence is perfect on a static field") {
    SynthParams still;
    still.blobs = 2;
    still.static_field = true;
    auto windows = persistence_windows(30, 3, still);
    auto rec = evaluate("persistence", persistence(12), windows, EvalConfig{0.5, windows[0].scale, 6});
    for (const auto& r : rec) {
        CHECK(r.mse == 0.0);
        CHECK(r.metrics.accuracy == 1.0);
        CHECK(r.metrics.f1 == 1.0);
    }
}

TEST_CASE("persistence error grows with lead time under advection") {
    auto windows = persistence_windows(80, 4, {}, 96, 1);
    auto rec = evaluate("persistence", persistence(12), windows, EvalConfig{0.5, windows[0].scale, 6});
    REQUIRE(rec.size() == 13);
    CHECK(rec[0].mse <= rec[11].mse);
    for (std::size_t k = 1; k < 12; ++k) CHECK(rec[k].mse >= rec[k - 1].mse);
    double mean = 0;
    for (std::size_t k = 0; k < 12; ++k) mean += rec[k].mse / 12;
    CHECK(rec[12].mse == doctest::Approx(mean).epsilon(1e-9));
    ConfusionCounts pooled;
    for (std::size_t k = 0; k < 12; ++k) pooled += rec[k].counts;
    CHECK(pooled == rec[12].counts);
}

TEST_CASE("evaluate rejects an empty dataset") {
    CHECK_THROWS_AS(evaluate("x", persistence(1), {}, EvalConfig{}), DataError);
}

TEST_CASE("report csv layout") {
    CHECK(report_csv({}) == "model,horizon_min,mse,precision,recall,accuracy,f1,tp,fp,tn,fn\n");
    MetricsRecord r;
    r.model = "m";
    r.horizon_minutes = 30;
    r.mse = 1.23456789;
    r.counts = {1, 2, 3, 4};
    r.metrics = metrics_from_counts(r.counts);
    MetricsRecord all = r;
    all.horizon_minutes = kAllHorizons;
    const std::string csv = report_csv({r, all});
    std::istringstream in(csv);
    std::string header, line1, line2;
    std::getline(in, header);
    std::getline(in, line1);
    std::getline(in, line2);
    CHECK(line1.rfind("m,30,1.23457,", 0) == 0);
    CHECK(line1.find(",1,2,3,4") != std::string::npos);
    CHECK(line2.rfind("m,all,", 0) == 0);
    CHECK(std::stod(line1.substr(5, 7)) == doctest::Approx(1.23457).epsilon(1e-9));
}
