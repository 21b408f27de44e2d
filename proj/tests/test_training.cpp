#include <cmath>
#include <cstring>

#include "doctest.h"
#include "helpers.hpp"
#include "ssa/checkpoint.hpp"
#include "ssa/data.hpp"
#include "ssa/errors.hpp"
#include "ssa/training.hpp"

using namespace ssa;

namespace {

std::vector<SampleWindow> synth_windows(std::size_t frames, std::uint64_t seed) {
    auto p = preprocess(synth_generate(frames, 32, 32, seed), std::nullopt);
    return make_windows(p.sequence, WindowSpec::precipitation(6), 1, p.scale);
}

}  // namespace

TEST_CASE("mse loss value and gradient") {
    TensorD p(Shape{1, 1, 1, 4}, std::vector<double>{1, 2, 3, 4});
    TensorD t(Shape{1, 1, 1, 4}, std::vector<double>{0, 2, 5, 4});
    auto r = mse_loss(p, t);
    CHECK(r.loss == doctest::Approx(5.0 / 4).epsilon(1e-15));
    CHECK(r.grad(0, 0, 0, 0) == doctest::Approx(0.5));
    CHECK(r.grad(0, 0, 0, 2) == doctest::Approx(-1.0));
    CHECK(r.grad(0, 0, 0, 1) == 0.0);
    CHECK_THROWS_AS(mse_loss(p, TensorD(Shape{1, 1, 1, 3})), DimensionError);
}

TEST_CASE("adam matches the scalar recurrence") {
    OptimizerState<double> hp;
    hp.lr = 0.01;
    TensorD w(Shape{1, 1, 1, 1}, 0.5);
    AdamMoments<double> mom{TensorD(Shape{1, 1, 1, 1}), TensorD(Shape{1, 1, 1, 1})};
    double x = 0.5, m = 0, v = 0;
    const double grads[] = {0.3, -1.2, 0.05};
    for (std::uint64_t t = 1; t <= 3; ++t) {
        const double g = grads[t - 1];
        adam_update(w, TensorD(Shape{1, 1, 1, 1}, g), mom, t, hp);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1 - std::pow(0.9, t));
        const double vh = v / (1 - std::pow(0.999, t));
        x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        CHECK(std::abs(w(0, 0, 0, 0) - x) <= 1e-12);
    }
}

TEST_CASE("adam leaves parameters alone for zero gradients") {
    Model m(ModelConfig::tiny());
    std::vector<Tensor> before;
    m.visit_parameters([&](Parameter<float>& p) { before.push_back(p.value); });
    OptimizerState<float> st;
    st.step = 41;
    m.zero_grad();
    adam_step(m, st);
    CHECK(st.step == 42);
    std::size_t i = 0;
    m.visit_parameters([&](Parameter<float>& p) { CHECK(max_abs_diff(p.value, before[i++]) == 0.0); });
}

TEST_CASE("plateau schedule drops the rate after four flat epochs") {
    PlateauSchedule s;
    double lr = 1e-3;
    lr = s.step(lr, 1.0);
    for (int i = 0; i < 3; ++i) {
        lr = s.step(lr, 1.0);
        CHECK(lr == 1e-3);
    }
    lr = s.step(lr, 1.5);
    CHECK(lr == 1e-3 * 0.1);
    // counter restarts after a reduction
    for (int i = 0; i < 3; ++i) lr = s.step(lr, 1.0);
    CHECK(lr == 1e-3 * 0.1);
    lr = s.step(lr, 1.0);
    CHECK(lr == doctest::Approx(1e-5).epsilon(1e-12));
    // an improvement resets the count
    lr = s.step(lr, 0.5);
    for (int i = 0; i < 3; ++i) lr = s.step(lr, 0.6);
    CHECK(lr == doctest::Approx(1e-5).epsilon(1e-12));
}

TEST_CASE("early stopping after fifteen flat epochs or two hundred total") {
    EarlyStopping e;
    CHECK_FALSE(e.step(1.0));
    for (int i = 0; i < 14; ++i) CHECK_FALSE(e.step(1.0));
    CHECK(e.step(1.0));

    EarlyStopping improving;
    for (int i = 0; i < 199; ++i) CHECK_FALSE(improving.step(1.0 / (i + 1)));
    CHECK(improving.step(1e-9));

    EarlyStopping reset;
    for (int i = 0; i < 10; ++i) reset.step(1.0);
    CHECK_FALSE(reset.step(0.5));
    CHECK(reset.counter() == 0);
}

TEST_CASE("training is deterministic and writes checkpoints") {
    auto windows = synth_windows(40, 3);
    std::vector<SampleWindow> tr(windows.begin(), windows.begin() + 16), va(windows.begin() + 16, windows.end());
    auto dir = testutil::temp_dir("train");
    TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.seed = 5;
    cfg.checkpoint_dir = dir / "a";

    Model a(ModelConfig::tiny());
    auto ra = train(a, tr, va, cfg);
    cfg.checkpoint_dir = dir / "b";
    Model b(ModelConfig::tiny());
    auto rb = train(b, tr, va, cfg);

    REQUIRE(ra.history.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(ra.history[i].train_mse == rb.history[i].train_mse);
        CHECK(ra.history[i].val_mse == rb.history[i].val_mse);
    }
    for (const char* f : {"epoch_001.ssac", "epoch_002.ssac", "best.ssac"}) {
        REQUIRE(std::filesystem::exists(dir / "a" / f));
        CHECK(testutil::read_bytes(dir / "a" / f) == testutil::read_bytes(dir / "b" / f));
    }
    auto best = load_checkpoint(dir / "a" / "best.ssac");
    CHECK(best.meta.epoch == ra.best_epoch);
    CHECK(best.meta.best_val_loss == ra.best_val_mse);
}

TEST_CASE("a few epochs reduce the training loss") {
    auto windows = synth_windows(30, 4);
    std::vector<SampleWindow> tr(windows.begin(), windows.begin() + 6);
    TrainConfig cfg;
    cfg.max_epochs = 12;
    cfg.seed = 1;
    cfg.lr = 3e-3;
    Model m(ModelConfig::tiny());
    auto r = train(m, tr, tr, cfg);
    CHECK(r.history.back().train_mse < r.history.front().train_mse);
    CHECK(r.best_val_mse < r.history.front().val_mse);
}

TEST_CASE("non-finite loss aborts naming a parameter") {
    auto windows = synth_windows(30, 5);
    std::vector<SampleWindow> tr(windows.begin(), windows.begin() + 2);
    tr[0].targets(0, 0, 3, 3) = std::numeric_limits<float>::quiet_NaN();
    Model m(ModelConfig::tiny());
    TrainConfig cfg;
    cfg.max_epochs = 1;
    try {
        train(m, tr, tr, cfg);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("encoder.level1") != std::string::npos);
    }
}

TEST_CASE("loss csv layout") {
    auto dir = testutil::temp_dir("losscsv");
    write_loss_csv({{1, 0.5, 0.25, 1e-3}}, dir / "loss.csv");
    const std::string s = testutil::read_bytes(dir / "loss.csv");
    CHECK(s.rfind("epoch,train_mse,val_mse,lr\n", 0) == 0);
    CHECK(s.find("1,0.5,0.25,0.001") != std::string::npos);
}
