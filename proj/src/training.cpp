#include "ssa/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace ssa {

// ---------------------------------------------------------------------------
// loss and optimizer

template <typename T>
LossResult<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    require_same_shape(pred.shape(), target.shape(), "mse_loss");
    LossResult<T> r;
    r.grad = BasicTensor<T>(pred.shape());
    const std::size_t n = pred.numel();
    const T* p = pred.ptr();
    const T* t = target.ptr();
    T* g = r.grad.ptr();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        sum += d * d;
        g[i] = static_cast<T>(2.0 * d / static_cast<double>(n));
    }
    r.loss = sum / static_cast<double>(n);
    return r;
}

template <typename T>
void adam_update(BasicTensor<T>& value, const BasicTensor<T>& grad, AdamMoments<T>& mo, std::uint64_t t,
                 const OptimizerState<T>& hp) {
    if (mo.m.empty()) mo.m = BasicTensor<T>(value.shape());
    if (mo.v.empty()) mo.v = BasicTensor<T>(value.shape());
    const T b1 = static_cast<T>(hp.beta1);
    const T b2 = static_cast<T>(hp.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(hp.beta1, static_cast<double>(t)));
    const T c2 = static_cast<T>(1.0 - std::pow(hp.beta2, static_cast<double>(t)));
    const T lr = static_cast<T>(hp.lr);
    const T eps = static_cast<T>(hp.eps);
    T* p = value.ptr();
    T* m = mo.m.ptr();
    T* v = mo.v.ptr();
    const T* g = grad.empty() ? nullptr : grad.ptr();
    for (std::size_t i = 0; i < value.numel(); ++i) {
        const T gi = g ? g[i] : T(0);
        m[i] = b1 * m[i] + (T(1) - b1) * gi;
        v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
        const T mhat = m[i] / c1;
        const T vhat = v[i] / c2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

template <typename T>
void adam_step(Module<T>& model, OptimizerState<T>& state) {
    ++state.step;
    model.visit_parameters([&](Parameter<T>& prm) {
        adam_update(prm.value, prm.grad, state.moments[prm.name], state.step, state);
    });
}

double PlateauSchedule::step(double lr, double val_loss) {
    if (val_loss < best_) {
        best_ = val_loss;
        counter_ = 0;
        return lr;
    }
    if (++counter_ >= patience_) {
        counter_ = 0;
        return lr * factor_;
    }
    return lr;
}

bool EarlyStopping::step(double val_loss) {
    ++epochs_;
    if (val_loss < best_) {
        best_ = val_loss;
        counter_ = 0;
    } else {
        ++counter_;
    }
    return counter_ >= patience_ || epochs_ >= max_epochs_;
}

template LossResult<float> mse_loss(const Tensor&, const Tensor&);
template LossResult<double> mse_loss(const TensorD&, const TensorD&);
template void adam_update(Tensor&, const Tensor&, AdamMoments<float>&, std::uint64_t, const OptimizerState<float>&);
template void adam_update(TensorD&, const TensorD&, AdamMoments<double>&, std::uint64_t,
                          const OptimizerState<double>&);
template void adam_step(Module<float>&, OptimizerState<float>&);
template void adam_step(Module<double>&, OptimizerState<double>&);

// ---------------------------------------------------------------------------
// epoch loop

namespace {

std::vector<std::vector<std::size_t>> batches_of(std::vector<std::size_t> order, std::size_t batch) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += batch) {
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch)));
    }
    return out;
}

std::string first_bad_gradient(Model& model) {
    std::string bad;
    model.visit_parameters([&](Parameter<float>& p) {
        if (bad.empty() && !p.grad.empty() && !all_finite(p.grad)) bad = p.name;
    });
    return bad;
}

struct Snapshot {
    std::vector<Tensor> values;

    void take(Model& m) {
        values.clear();
        m.visit_parameters([&](Parameter<float>& p) { values.push_back(p.value); });
        m.visit_buffers([&](const std::string&, Tensor& t) { values.push_back(t); });
    }
    void restore(Model& m) const {
        std::size_t i = 0;
        m.visit_parameters([&](Parameter<float>& p) { p.value = values[i++]; });
        m.visit_buffers([&](const std::string&, Tensor& t) { t = values[i++]; });
    }
};

std::filesystem::path epoch_file(const std::filesystem::path& dir, std::size_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%03zu.ssac", epoch);
    return dir / buf;
}

}  // namespace

double evaluate_loss(Model& model, const std::vector<SampleWindow>& windows, std::size_t batch_size) {
    if (windows.empty()) throw DataError("cannot compute a loss over zero windows");
    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), 0);
    const Pass<float> pass{Mode::Eval, false, {}};
    double total = 0.0;
    const auto batches = batches_of(order, batch_size);
    for (const auto& b : batches) {
        const Tensor pred = model.forward(stack_inputs(windows, b), pass);
        total += mse_loss(pred, stack_targets(windows, b)).loss;
    }
    return total / static_cast<double>(batches.size());
}

TrainResult train(Model& model, const std::vector<SampleWindow>& train_set, const std::vector<SampleWindow>& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    if (train_set.empty()) throw DataError("training split has no windows");
    if (val_set.empty()) throw DataError("validation split has no windows");
    if (config.batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (config.checkpoint_dir) std::filesystem::create_directories(*config.checkpoint_dir);

    TrainResult result;
    result.optimizer.lr = config.lr;
    PlateauSchedule schedule(config.lr_patience, config.lr_factor);
    EarlyStopping stopper(config.stop_patience, config.max_epochs);
    Rng rng(config.seed);
    Snapshot best;
    best.take(model);
    result.best_val_mse = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    const Pass<float> train_pass{Mode::Train, true, {}};

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
        }
        double train_total = 0.0;
        const auto batches = batches_of(order, config.batch_size);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            model.zero_grad();
            const Tensor pred = model.forward(stack_inputs(train_set, batches[b]), train_pass);
            auto loss = mse_loss(pred, stack_targets(train_set, batches[b]));
            model.backward(loss.grad);
            if (!std::isfinite(loss.loss)) {
                const std::string bad = first_bad_gradient(model);
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b + 1) + "; first non-finite gradient: " +
                                   (bad.empty() ? std::string("none") : bad));
            }
            adam_step(model, result.optimizer);
            train_total += loss.loss;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_mse = train_total / static_cast<double>(batches.size());
        rec.val_mse = evaluate_loss(model, val_set, config.batch_size);
        rec.lr = result.optimizer.lr;
        if (!std::isfinite(rec.val_mse)) {
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        result.history.push_back(rec);

        const bool improved = rec.val_mse < result.best_val_mse;
        if (improved) {
            result.best_val_mse = rec.val_mse;
            result.best_epoch = epoch;
            best.take(model);
        }
        if (config.checkpoint_dir) {
            CheckpointMeta meta{epoch, result.best_val_mse, config.scale};
            save_checkpoint(model, &result.optimizer, meta, epoch_file(*config.checkpoint_dir, epoch));
            if (improved) save_checkpoint(model, &result.optimizer, meta, *config.checkpoint_dir / "best.ssac");
        }
        if (on_epoch) on_epoch(rec);

        result.optimizer.lr = schedule.step(result.optimizer.lr, rec.val_mse);
        if (stopper.step(rec.val_mse)) break;
    }
    best.restore(model);
    return result;
}

void write_loss_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "epoch,train_mse,val_mse,lr\n";
    char buf[160];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", r.epoch, r.train_mse, r.val_mse, r.lr);
        out << buf;
    }
}

}  // namespace ssa
