#pragma once

// Differentiable NCHW kernels. Each forward optionally fills an OpContext;
// the matching *_backward consumes it exactly once and leaves it disarmed.

#include <cstddef>
#include <utility>
#include <vector>

#include "ssa/tensor.hpp"

namespace ssa {

enum class Mode { Train, Eval };

enum class OpKind {
    None,
    Conv2d,
    ChannelShuffle,
    BatchNorm,
    GroupNorm,
    Relu,
    Sigmoid,
    MaxPool,
    Upsample,
    Concat,
    GlobalAvgPool,
    GlobalMaxPool,
    ChannelAffine,
    Multiply,
    Add,
    SliceChannels,
    ChannelMean,
    ChannelMax,
};

const char* op_name(OpKind op);

struct Conv2dParams {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
};

template <typename T>
struct OpContext {
    OpKind op = OpKind::None;
    std::vector<BasicTensor<T>> saved;
    std::vector<std::size_t> index;
    Shape input_shape{};
    Shape other_shape{};
    Conv2dParams conv{};
    std::size_t groups = 0;
    std::size_t offset = 0;
    bool has_bias = false;
    Mode mode = Mode::Eval;

    bool armed() const { return op != OpKind::None; }
    void reset() { *this = OpContext{}; }
};

// --- convolution ----------------------------------------------------------

template <typename T>
struct Conv2dGrads {
    BasicTensor<T> input;
    BasicTensor<T> weight;
    BasicTensor<T> bias;  // empty when the forward had no bias
};

/// Grouped cross-correlation. weight is (c_out, c_in/groups, kh, kw), bias is
/// (1, c_out, 1, 1) or null.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>* bias,
                      Conv2dParams params, OpContext<T>* ctx = nullptr);

template <typename T>
Conv2dGrads<T> conv2d_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

// --- channel permutation --------------------------------------------------

/// Output channel j takes input channel (j % groups) * (c / groups) + j / groups.
template <typename T>
BasicTensor<T> channel_shuffle(const BasicTensor<T>& input, std::size_t groups, OpContext<T>* ctx = nullptr);

template <typename T>
BasicTensor<T> channel_shuffle_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

/// Source channel for output channel j.
std::size_t shuffle_source_channel(std::size_t j, std::size_t channels, std::size_t groups);

// --- normalization --------------------------------------------------------

struct BatchNormParams {
    double momentum = 0.1;
    double epsilon = 1e-5;
};

/// Running statistics, each (1, c, 1, 1). Starts at mean 0, variance 1.
template <typename T>
struct BatchNormState {
    BasicTensor<T> running_mean;
    BasicTensor<T> running_var;

    explicit BatchNormState(std::size_t channels = 1)
        : running_mean(Shape{1, channels, 1, 1}, T(0)), running_var(Shape{1, channels, 1, 1}, T(1)) {}
};

template <typename T>
struct NormGrads {
    BasicTensor<T> input;
    BasicTensor<T> gamma;
    BasicTensor<T> beta;
};

/// Train mode normalizes with batch statistics over (n, h, w) and updates the
/// running statistics; eval mode uses the running statistics.
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          BatchNormState<T>& state, Mode mode, BatchNormParams params = {},
                          OpContext<T>* ctx = nullptr);

template <typename T>
NormGrads<T> batch_norm_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

/// Normalizes every (sample, channel) plane over (h, w), then applies the
/// per-channel affine.
template <typename T>
BasicTensor<T> group_norm_per_channel(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                                      const BasicTensor<T>& beta, double epsilon = 1e-5,
                                      OpContext<T>* ctx = nullptr);

template <typename T>
NormGrads<T> group_norm_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

// --- activations ----------------------------------------------------------

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input, OpContext<T>* ctx = nullptr);
template <typename T>
BasicTensor<T> relu_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input, OpContext<T>* ctx = nullptr);
template <typename T>
BasicTensor<T> sigmoid_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

// --- resampling -----------------------------------------------------------

/// 2x2 window, stride 2. Ties resolve to the first element in row-major order.
template <typename T>
BasicTensor<T> max_pool_2x2(const BasicTensor<T>& input, OpContext<T>* ctx = nullptr);
template <typename T>
BasicTensor<T> max_pool_2x2_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

/// Bilinear x2 with half-pixel centers (source coordinate (dst + 0.5) / 2 - 0.5,
/// clamped at the border).
template <typename T>
BasicTensor<T> bilinear_upsample_x2(const BasicTensor<T>& input, OpContext<T>* ctx = nullptr);
template <typename T>
BasicTensor<T> bilinear_upsample_x2_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

/// Half-pixel bilinear resize of every plane to (out_h, out_w). Not differentiable;
/// used for rendering.
template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& input, std::size_t out_h, std::size_t out_w);

// --- channel plumbing -----------------------------------------------------

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b, OpContext<T>* ctx = nullptr);
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> concat_channels_backward(OpContext<T>& ctx,
                                                                   const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::size_t begin, std::size_t count,
                              OpContext<T>* ctx = nullptr);
template <typename T>
BasicTensor<T> slice_channels_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

// --- pooling and gating ---------------------------------------------------

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input, OpContext<T>* ctx = nullptr);
template <typename T>
BasicTensor<T> global_avg_pool_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> global_max_pool(const BasicTensor<T>& input, OpContext<T>* ctx = nullptr);
template <typename T>
BasicTensor<T> global_max_pool_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

/// Mean over channels -> (n, 1, h, w).
template <typename T>
BasicTensor<T> channel_mean(const BasicTensor<T>& input, OpContext<T>* ctx = nullptr);
template <typename T>
BasicTensor<T> channel_mean_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

/// Max over channels -> (n, 1, h, w); ties go to the lowest channel.
template <typename T>
BasicTensor<T> channel_max(const BasicTensor<T>& input, OpContext<T>* ctx = nullptr);
template <typename T>
BasicTensor<T> channel_max_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

template <typename T>
struct AffineGrads {
    BasicTensor<T> input;
    BasicTensor<T> scale;
    BasicTensor<T> shift;
};

/// y = x * scale[c] + shift[c] with scale/shift shaped (1, c, 1, 1).
template <typename T>
BasicTensor<T> channel_affine(const BasicTensor<T>& input, const BasicTensor<T>& scale,
                              const BasicTensor<T>& shift, OpContext<T>* ctx = nullptr);
template <typename T>
AffineGrads<T> channel_affine_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

/// x * gate where gate is x-shaped, (n, c, 1, 1) or (n, 1, h, w).
template <typename T>
BasicTensor<T> multiply(const BasicTensor<T>& x, const BasicTensor<T>& gate, OpContext<T>* ctx = nullptr);
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> multiply_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b, OpContext<T>* ctx = nullptr);
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> add_backward(OpContext<T>& ctx, const BasicTensor<T>& grad_out);

}  // namespace ssa
