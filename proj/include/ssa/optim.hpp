#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>

#include "ssa/module.hpp"

namespace ssa {

template <typename T>
struct LossResult {
    double loss = 0.0;
    BasicTensor<T> grad;  // dL/d(pred)
};

/// Mean of squared differences over every element; gradient 2(pred - target)/N.
template <typename T>
LossResult<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

template <typename T>
struct AdamMoments {
    BasicTensor<T> m;
    BasicTensor<T> v;
};

template <typename T>
struct OptimizerState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::map<std::string, AdamMoments<T>> moments;  // keyed by parameter name
};

/// Bias-corrected Adam on every parameter of `model`. Missing moments start
/// at zero; an empty gradient counts as zero.
template <typename T>
void adam_step(Module<T>& model, OptimizerState<T>& state);

/// Single-tensor update at step `t` (already incremented).
template <typename T>
void adam_update(BasicTensor<T>& value, const BasicTensor<T>& grad, AdamMoments<T>& moments, std::uint64_t t,
                 const OptimizerState<T>& hp);

/// Reduce-on-plateau: after `patience` consecutive epochs without a strictly
/// lower validation loss the rate is multiplied by `factor`.
class PlateauSchedule {
public:
    PlateauSchedule(std::size_t patience = 4, double factor = 0.1) : patience_(patience), factor_(factor) {}

    /// Returns the rate to use from now on.
    double step(double lr, double val_loss);
    std::size_t counter() const { return counter_; }
    double best() const { return best_; }

private:
    std::size_t patience_;
    double factor_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t counter_ = 0;
};

/// Stops after `patience` consecutive non-improving epochs or `max_epochs`.
class EarlyStopping {
public:
    EarlyStopping(std::size_t patience = 15, std::size_t max_epochs = 200)
        : patience_(patience), max_epochs_(max_epochs) {}

    /// Records one finished epoch; true means stop.
    bool step(double val_loss);
    std::size_t counter() const { return counter_; }
    std::size_t epochs() const { return epochs_; }
    double best() const { return best_; }

private:
    std::size_t patience_;
    std::size_t max_epochs_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t counter_ = 0;
    std::size_t epochs_ = 0;
};

}  // namespace ssa
