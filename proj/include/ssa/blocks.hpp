#pragma once

#include <memory>

#include "ssa/module.hpp"

namespace ssa {

/// 3x3 depthwise convolution with `kernels_per_layer` filters per input
/// channel, followed by a 1x1 pointwise convolution. Both stages carry a bias.
template <typename T>
class DepthwiseSeparableConv : public Module<T> {
public:
    DepthwiseSeparableConv(std::string name, std::size_t in_channels, std::size_t out_channels,
                           std::size_t kernels_per_layer, Rng& rng);

    Conv2dLayer<T>& depthwise() { return depthwise_; }
    Conv2dLayer<T>& pointwise() { return pointwise_; }

    /// c_in*km*9 + c_in*km + c_out*c_in*km + c_out
    static std::size_t expected_params(std::size_t in, std::size_t out, std::size_t km);

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& x, const Pass<T>& pass) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;

private:
    Conv2dLayer<T> depthwise_;
    Conv2dLayer<T> pointwise_;
};

/// Depthwise stage, grouped pointwise convolution, then a channel shuffle with
/// the same group count.
template <typename T>
class ShuffledDepthwiseSeparableConv : public Module<T> {
public:
    ShuffledDepthwiseSeparableConv(std::string name, std::size_t in_channels, std::size_t out_channels,
                                   std::size_t kernels_per_layer, std::size_t groups, Rng& rng);

    Conv2dLayer<T>& depthwise() { return depthwise_; }
    Conv2dLayer<T>& pointwise() { return pointwise_; }
    std::size_t groups() const { return groups_; }

    /// c_in*km*9 + c_in*km + c_out*(c_in*km)/g + c_out
    static std::size_t expected_params(std::size_t in, std::size_t out, std::size_t km, std::size_t groups);
    /// Throws ConfigError unless c_in*km and c_out are divisible by groups.
    static void validate(const std::string& name, std::size_t in, std::size_t out, std::size_t km,
                         std::size_t groups);

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& x, const Pass<T>& pass) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;

private:
    std::size_t groups_;
    Conv2dLayer<T> depthwise_;
    Conv2dLayer<T> pointwise_;
    OpContext<T> shuffle_ctx_;
};

enum class BlockVariant { Classic, Shuffled };

struct DoubleConvSpec {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t mid_channels = 0;  // 0 means out_channels
    std::size_t kernels_per_layer = 2;
    BlockVariant variant = BlockVariant::Classic;
    std::size_t shuffle_groups = 1;  // only for the shuffled variant
};

/// (separable conv -> batch norm -> relu) twice. The shuffled variant swaps
/// the first convolution for its shuffled counterpart; the second stays classic.
template <typename T>
class DoubleConvBlock : public Module<T> {
public:
    DoubleConvBlock(std::string name, const DoubleConvSpec& spec, Rng& rng);

    Module<T>& conv1() { return *conv1_; }
    DepthwiseSeparableConv<T>& conv2() { return conv2_; }
    const DoubleConvSpec& spec() const { return spec_; }

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& x, const Pass<T>& pass) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;

private:
    DoubleConvSpec spec_;
    std::unique_ptr<Module<T>> conv1_;
    BatchNorm2d<T> bn1_;
    DepthwiseSeparableConv<T> conv2_;
    BatchNorm2d<T> bn2_;
    OpContext<T> relu1_;
    OpContext<T> relu2_;
};

/// Shuffle Attention. Channels split into G groups; each group's first half
/// is gated by sigmoid(w1 * avgpool + b1), its second half by
/// sigmoid(w2 * groupnorm + b2); the halves are rejoined and the channels are
/// shuffled with G groups. The branch vectors (length c / 2G) are shared by all
/// groups.
template <typename T>
class ShuffleAttention : public Module<T> {
public:
    ShuffleAttention(std::string name, std::size_t channels, std::size_t groups);

    std::size_t groups() const { return groups_; }
    Parameter<T>& channel_weight() { return cweight_; }
    Parameter<T>& channel_bias() { return cbias_; }
    Parameter<T>& spatial_weight() { return sweight_; }
    Parameter<T>& spatial_bias() { return sbias_; }

    static std::size_t expected_params(std::size_t channels, std::size_t groups);

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& x, const Pass<T>& pass) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;

private:
    std::size_t channels_;
    std::size_t groups_;
    Parameter<T> cweight_, cbias_, sweight_, sbias_, gn_gamma_, gn_beta_;
    Shape input_shape_{};
    OpContext<T> slice_a_, slice_b_, pool_, affine_a_, sig_a_, mul_a_;
    OpContext<T> norm_, affine_b_, sig_b_, mul_b_, cat_, shuffle_;
};

/// Channel then spatial attention: shared two-layer MLP (reduction r) over
/// avg- and max-pooled descriptors, then a 7x7 conv over stacked channel-mean
/// and channel-max maps.
template <typename T>
class Cbam : public Module<T> {
public:
    Cbam(std::string name, std::size_t channels, std::size_t reduction, Rng& rng, std::size_t kernel = 7);

    Parameter<T>& fc1_weight() { return fc1_w_; }
    Parameter<T>& fc2_weight() { return fc2_w_; }
    Parameter<T>& spatial_weight() { return sp_w_; }

    static std::size_t expected_params(std::size_t channels, std::size_t reduction, std::size_t kernel = 7);

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& x, const Pass<T>& pass) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;

private:
    BasicTensor<T> mlp_forward(const BasicTensor<T>& v, OpContext<T>* c1, OpContext<T>* r, OpContext<T>* c2);
    BasicTensor<T> mlp_backward(const BasicTensor<T>& g, OpContext<T>& c1, OpContext<T>& r, OpContext<T>& c2);

    std::size_t kernel_;
    Parameter<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_, sp_w_, sp_b_;
    OpContext<T> avg_, max_, avg_fc1_, avg_relu_, avg_fc2_, max_fc1_, max_relu_, max_fc2_;
    OpContext<T> add_, sig_c_, mul_c_, cmean_, cmax_, cat_, sp_conv_, sig_s_, mul_s_;
};

}  // namespace ssa
