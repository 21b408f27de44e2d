#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>

#include "ssa/model.hpp"
#include "ssa/optim.hpp"

namespace ssa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::uint64_t epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    double scale = 1.0;  // normalization constant of the training split
};

struct Checkpoint {
    ModelConfig config;
    CheckpointMeta meta;
    OptimizerState<float> optimizer;
    std::unique_ptr<Model> model;
};

/// SSAC v1: "SSAC", u32 version, length-prefixed key=value block (config and
/// meta), u32 count + (name, RTEN) pairs for parameters and batch-norm
/// buffers, u32 count + (name, RTEN) pairs for optimizer moments.
void save_checkpoint(Model& model, const OptimizerState<float>* optimizer, const CheckpointMeta& meta,
                     const std::filesystem::path& path);

/// Rebuilds the model from the embedded config, or from `expected` when
/// given, in which case every stored tensor must match its shape. Nothing is
/// returned on error.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace ssa
