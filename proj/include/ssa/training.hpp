#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "ssa/checkpoint.hpp"
#include "ssa/data.hpp"
#include "ssa/model.hpp"
#include "ssa/optim.hpp"

namespace ssa {

struct TrainConfig {
    std::size_t batch_size = 6;
    std::size_t max_epochs = 200;
    double lr = 1e-3;
    std::size_t lr_patience = 4;
    double lr_factor = 0.1;
    std::size_t stop_patience = 15;
    std::uint64_t seed = 0;
    double scale = 1.0;  // stored in checkpoints for denormalization
    /// Writes epoch_NNN.ssac every epoch and best.ssac on improvement.
    std::optional<std::filesystem::path> checkpoint_dir;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_mse = 0.0;
    OptimizerState<float> optimizer;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Seeded mini-batch Adam with plateau LR decay and early stopping. The model
/// is left holding the weights of the best validation epoch. Throws
/// NumericError naming the first parameter with a non-finite gradient when the
/// loss is not finite.
TrainResult train(Model& model, const std::vector<SampleWindow>& train_set, const std::vector<SampleWindow>& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean over batches of the eval-mode MSE.
double evaluate_loss(Model& model, const std::vector<SampleWindow>& windows, std::size_t batch_size = 6);

/// Columns: epoch, train_mse, val_mse, lr.
void write_loss_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace ssa
