#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssa/model.hpp"

namespace ssa {

struct Heatmap {
    TensorD values;  // (1, 1, H, W) at input resolution, in [0, 1]
    std::string layer;
    std::size_t source_h = 0;
    std::size_t source_w = 0;
    bool all_zero = false;  // raw map was constant (normally all zero); values are all 0
};

/// The differentiated scalar is `scale` times the sum of one output frame.
struct CamTarget {
    std::optional<std::size_t> frame;  // default: last output frame
    double scale = 1.0;
};

/// Grad-CAM for each named layer from a single forward/backward pass over a
/// one-sample input (1, c, H, W). The model runs in eval mode; parameter
/// gradients are cleared afterwards. Unknown names throw ConfigError listing
/// the available layers.
template <typename T>
std::vector<Heatmap> grad_cam(SSAUNet<T>& model, const BasicTensor<T>& input, const std::vector<std::string>& layers,
                              const CamTarget& target = {});

template <typename T>
Heatmap grad_cam(SSAUNet<T>& model, const BasicTensor<T>& input, const std::string& layer,
                 const CamTarget& target = {});

/// ReLU of the gradient-weighted channel sum, resized to (out_h, out_w) and
/// min-max normalized. `activation` and `gradient` are (1, k, h, w).
Heatmap cam_from(const TensorD& activation, const TensorD& gradient, std::size_t out_h, std::size_t out_w);

struct SweepLayer {
    std::string label;   // file stem, e.g. "conv1.enc3"
    std::string module;  // registry name, e.g. "encoder.level3.conv1"
};

/// Block, first conv, second conv and attention of the five encoder levels,
/// then the four decoder blocks: 24 entries.
std::vector<SweepLayer> default_sweep_layers();

/// 8-bit binary PGM; values in [0, 1] map linearly to 0..255 (clamped).
void write_pgm(const TensorD& map, const std::filesystem::path& path);
void write_pgm(const Tensor& map, const std::filesystem::path& path);

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
};
GrayImage read_pgm(const std::filesystem::path& path);

std::uint8_t quantize(double v);

/// Equal-height panels side by side, clamped to [0, 1], with a 2-pixel black
/// gutter between them.
void write_composite(const std::vector<TensorD>& panels, const std::filesystem::path& path);

}  // namespace ssa
