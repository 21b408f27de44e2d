#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ssa/blocks.hpp"
#include "ssa/data.hpp"

namespace ssa {

enum class Attention { Shuffle, Cbam };

const char* attention_name(Attention a);
Attention parse_attention(const std::string& s);

struct ModelConfig {
    std::size_t in_channels = 12;
    std::size_t out_channels = 12;
    /// Depth multiplier of the shuffled encoder blocks (levels 2..5).
    std::size_t kernels_per_layer = 3;
    /// Depth multiplier of level 1, the decoder and every classic block.
    std::size_t base_kernels_per_layer = 2;
    std::vector<std::size_t> widths{64, 128, 256, 512, 1024};
    std::vector<std::size_t> conv_groups{16, 16, 32, 32};  // encoder levels 2..5
    std::vector<std::size_t> sa_groups{2, 4, 8, 16, 32};   // encoder levels 1..5
    Attention attention = Attention::Shuffle;
    bool shuffled = true;
    std::size_t cbam_reduction = 16;
    std::uint64_t seed = 0;

    /// Output channels of each encoder level. The bottleneck is widths[4] / 2
    /// so that the first decoder concatenation stays symmetric.
    std::array<std::size_t, 5> level_channels() const;
    /// Output channels of decoder levels 1..4 (index 0 = full resolution).
    std::array<std::size_t, 4> decoder_channels() const;

    /// Throws ConfigError naming the first violated constraint.
    void validate() const;

    /// One key=value per line; doubles are not needed, so the form is exact.
    std::string to_kv() const;
    static ModelConfig from_kv(const std::string& text);

    bool operator==(const ModelConfig&) const = default;

    /// Shuffled blocks, shuffle attention, km = 3.
    static ModelConfig standard(std::size_t outputs = 12);
    /// As standard with km = 2.
    static ModelConfig reduced(std::size_t outputs = 12);
    /// Classic blocks with CBAM, km = 2 everywhere.
    static ModelConfig baseline(std::size_t outputs = 12);
    /// 4 binary frames in, 6 out.
    static ModelConfig cloud();
    /// Widths 8..128 for fast tests.
    static ModelConfig tiny(std::size_t in_channels = 12, std::size_t outputs = 6);
};

/// Five encoder levels (double-conv block + attention, max-pool between
/// levels), four decoder levels (bilinear x2 upsample, concat with the skip,
/// classic double-conv block) and a 1x1 head with bias.
template <typename T>
class SSAUNet : public Module<T> {
public:
    explicit SSAUNet(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }

    /// Names of all modules producing a spatial activation, in forward order.
    std::vector<std::string> layer_names() const;

    DoubleConvBlock<T>& encoder_block(std::size_t level) { return *enc_.at(level - 1); }
    Module<T>& encoder_attention(std::size_t level) { return *att_.at(level - 1); }
    DoubleConvBlock<T>& decoder_block(std::size_t level) { return *dec_.at(level - 1); }
    Conv2dLayer<T>& head() { return *head_; }

    /// Copies every parameter and buffer value from `other` (same config).
    void copy_state_from(SSAUNet& other);

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& x, const Pass<T>& pass) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;

private:
    ModelConfig config_;
    std::vector<std::unique_ptr<DoubleConvBlock<T>>> enc_;
    std::vector<std::unique_ptr<Module<T>>> att_;
    std::vector<std::unique_ptr<DoubleConvBlock<T>>> dec_;
    std::unique_ptr<Conv2dLayer<T>> head_;
    std::array<OpContext<T>, 4> pool_, up_, cat_;
};

using Model = SSAUNet<float>;

/// Every output frame is a copy of the last input frame.
Tensor persistence_predict(const SampleWindow& window);
/// Batched form: inputs (n, c_in, h, w) -> (n, outputs, h, w).
Tensor persistence_predict(const Tensor& inputs, std::size_t outputs);

struct ParamAuditRow {
    std::string module;
    std::size_t params = 0;
};

/// Top-level components (encoder levels, attention modules, decoder levels,
/// head) followed by a "total" row.
std::vector<ParamAuditRow> audit_parameters(Model& model);

}  // namespace ssa
