#include <cstring>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "ssa/data.hpp"
#include "ssa/errors.hpp"

using namespace ssa;

namespace {

FrameSequence ramp_sequence(std::size_t n, std::size_t side = 4) {
    FrameSequence s;
    for (std::size_t i = 0; i < n; ++i) {
        s.frames.emplace_back(Shape{1, 1, side, side}, static_cast<float>(i));
        s.timestamps.push_back(static_cast<std::int64_t>(i) * 5);
    }
    return s;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("synthetic generator edge cases") {
    CHECK_THROWS_AS(synth_generate(10, 16, 64, 1), ConfigError);

    SynthParams none;
    none.blobs = 0;
    for (const auto& f : synth_generate(5, 32, 32, 1, none).frames)
        for (float v : f.data()) CHECK(v == 0.0f);

    SynthParams still;
    still.blobs = 1;
    still.static_field = true;
    auto s = synth_generate(6, 32, 32, 2, still);
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(bit_equal(s.frames[i], s.frames[0]));

    auto a = synth_generate(8, 32, 48, 3), b = synth_generate(8, 32, 48, 3);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(bit_equal(a.frames[i], b.frames[i]));
    CHECK(a.contiguous());
    CHECK(a.width() == 48);
}

TEST_CASE("synthetic clouds are binary and reproducible") {
    auto a = synth_cloud(5, 32, 32, 4);
    CHECK(a.interval_minutes == 15);
    for (const auto& f : a.frames)
        for (float v : f.data()) CHECK((v == 0.0f || v == 1.0f));
    auto b = synth_cloud(5, 32, 32, 4);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(bit_equal(a.frames[i], b.frames[i]));

    CloudParams all;
    all.threshold = -1e9;
    for (const auto& f : synth_cloud(3, 32, 32, 5, all).frames)
        for (float v : f.data()) CHECK(v == 1.0f);
}

TEST_CASE("center crop offsets") {
    Tensor big(Shape{1, 1, 421, 421});
    for (std::size_t i = 0; i < big.numel(); ++i) big.ptr()[i] = static_cast<float>(i % 100003);
    auto c = center_crop(big, 288);
    REQUIRE(c.shape() == Shape{1, 1, 288, 288});
    CHECK(c(0, 0, 0, 0) == big(0, 0, 66, 66));
    CHECK(c(0, 0, 287, 287) == big(0, 0, 353, 353));
    CHECK(c(0, 0, 0, 287) == big(0, 0, 66, 353));
    CHECK(c(0, 0, 287, 0) == big(0, 0, 353, 66));
    CHECK_THROWS_AS(center_crop(big, 422), DimensionError);
}

TEST_CASE("preprocess normalization") {
    FrameSequence s;
    for (int i = 0; i < 3; ++i) {
        s.frames.emplace_back(Shape{1, 1, 4, 4}, 2.5f);
        s.timestamps.push_back(i * 5);
    }
    auto p = preprocess(s, std::nullopt);
    CHECK(p.scale == 2.5);
    for (const auto& f : p.sequence.frames)
        for (float v : f.data()) CHECK(v == 1.0f);

    auto z = ramp_sequence(3);
    for (auto& f : z.frames) f.fill(0.0f);
    CHECK_THROWS_AS(preprocess(z, std::nullopt), DataError);
    CHECK_THROWS_AS(preprocess(ramp_sequence(3), std::nullopt, 0.0), DataError);

    auto r = synth_generate(4, 32, 32, 6);
    auto q = preprocess(r, std::nullopt);
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t k = 0; k < r.frames[i].numel(); ++k) {
            const double back = static_cast<double>(q.sequence.frames[i].ptr()[k]) * q.scale;
            const double raw = r.frames[i].ptr()[k];
            CHECK(std::abs(back - raw) <= 1e-6 * std::max(1.0, std::abs(raw)));
        }
}

TEST_CASE("window counts") {
    CHECK(make_windows(ramp_sequence(24), WindowSpec::precipitation(12), 1).size() == 1);
    CHECK(make_windows(ramp_sequence(30), WindowSpec::precipitation(6), 1).size() == 13);
    CHECK(make_windows(ramp_sequence(17), WindowSpec::precipitation(6), 1).empty());
    CHECK(make_windows(ramp_sequence(30), WindowSpec::precipitation(6), 6).size() == 3);
    CHECK_THROWS_AS(WindowSpec::precipitation(5), ConfigError);
}

TEST_CASE("window contents and horizons") {
    auto w1 = make_windows(ramp_sequence(30), WindowSpec::precipitation(1), 1);
    REQUIRE(!w1.empty());
    CHECK(w1[0].inputs(0, 11, 0, 0) == 11.0f);
    CHECK(w1[0].targets(0, 0, 0, 0) == 17.0f);
    CHECK(w1[0].horizon_minutes == std::vector<std::size_t>{30});

    auto w12 = make_windows(ramp_sequence(30), WindowSpec::precipitation(12), 1);
    for (std::size_t k = 0; k < 12; ++k) {
        CHECK(w12[2].targets(0, k, 0, 0) == static_cast<float>(14 + k));
        CHECK(w12[2].horizon_minutes[k] == 5 * (k + 1));
    }
    for (std::size_t t = 1; t < 12; ++t) CHECK(w12[2].inputs(0, t, 0, 0) > w12[2].inputs(0, t - 1, 0, 0));

    auto cloud = WindowSpec::cloud();
    CHECK(cloud.inputs == 4);
    CHECK(cloud.outputs() == 6);
}

TEST_CASE("windows never span a timestamp gap") {
    auto s = ramp_sequence(30);
    for (std::size_t i = 15; i < 30; ++i) s.timestamps[i] += 60;
    CHECK(make_windows(s, WindowSpec::precipitation(1), 1).empty());
    // 13 windows without the gap; each 15-frame segment is shorter than the 18-frame span
    CHECK(make_windows(ramp_sequence(30), WindowSpec::precipitation(1), 1).size() == 13);
}

TEST_CASE("rain filter boundaries") {
    auto windows = make_windows(ramp_sequence(30), WindowSpec::precipitation(6), 1);
    CHECK(filter_windows(windows, 0.0).size() == windows.size());

    SampleWindow dry;
    dry.inputs = Tensor(Shape{1, 12, 4, 4});
    dry.targets = Tensor(Shape{1, 2, 4, 4});
    CHECK(filter_windows({dry}, 0.2).empty());

    SampleWindow half = dry;
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t p = 0; p < 8; ++p) half.targets.plane(0, k)[p] = 0.3f;
    std::size_t rainy = 0;
    for (std::size_t p = 0; p < 16; ++p) rainy += half.targets.plane(0, 0)[p] > 0.0f;
    REQUIRE(rainy == 8);
    CHECK(filter_windows({half}, 0.5).size() == 1);
    CHECK(filter_windows({half}, 0.51).empty());

    SampleWindow one = dry;
    for (std::size_t p = 0; p < 16; ++p) one.targets.plane(0, 1)[p] = 1.0f;
    CHECK(filter_windows({one}, 0.5, 0.0, FilterMode::AllTargets).empty());
    CHECK(filter_windows({one}, 0.5, 0.0, FilterMode::AnyTarget).size() == 1);

    auto kept = filter_windows({half, dry, one, half}, 0.5, 0.0, FilterMode::AnyTarget);
    REQUIRE(kept.size() == 3);
    CHECK(kept[1].targets(0, 1, 0, 0) == 1.0f);
}

TEST_CASE("chronological split keeps time order") {
    auto s = ramp_sequence(100);
    auto sp = chronological_split(s);
    CHECK(sp.train.size() == 70);
    CHECK(sp.val.size() == 15);
    CHECK(sp.test.size() == 15);
    CHECK(sp.train.timestamps.back() < sp.val.timestamps.front());
    CHECK(sp.val.timestamps.back() < sp.test.timestamps.front());
}

TEST_CASE("archive round trip and errors") {
    auto dir = testutil::temp_dir("rseq");
    auto s = synth_generate(7, 32, 40, 9);
    save_archive(s, dir / "a.rseq");
    auto t = load_archive(dir / "a.rseq");
    REQUIRE(t.size() == s.size());
    CHECK(t.interval_minutes == s.interval_minutes);
    CHECK(t.timestamps == s.timestamps);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(bit_equal(s.frames[i], t.frames[i]));

    const std::string good = testutil::read_bytes(dir / "a.rseq");
    auto write = [&](const std::string& bytes) {
        std::ofstream(dir / "x.rseq", std::ios::binary) << bytes;
        return dir / "x.rseq";
    };
    try {
        load_archive(write(good.substr(0, good.size() - 10)));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
    std::string fewer = good;
    std::uint32_t count = 6;
    std::memcpy(fewer.data() + 4, &count, 4);
    CHECK_THROWS_AS(load_archive(write(fewer)), IntegrityError);
    std::string bad = good;
    bad[1] = '?';
    CHECK_THROWS_AS(load_archive(write(bad)), FormatError);

    auto gap = ramp_sequence(4);
    gap.timestamps[3] += 5;
    CHECK_THROWS_AS(save_archive(gap, dir / "g.rseq"), DataError);
}
