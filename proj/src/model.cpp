#include "ssa/model.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace ssa {

const char* attention_name(Attention a) { return a == Attention::Shuffle ? "shuffle" : "cbam"; }

Attention parse_attention(const std::string& s) {
    if (s == "shuffle") return Attention::Shuffle;
    if (s == "cbam") return Attention::Cbam;
    throw ConfigError("unknown attention variant '" + s + "' (expected shuffle or cbam)");
}

// ---------------------------------------------------------------------------
// ModelConfig

std::array<std::size_t, 5> ModelConfig::level_channels() const {
    return {widths.at(0), widths.at(1), widths.at(2), widths.at(3), widths.at(4) / 2};
}

std::array<std::size_t, 4> ModelConfig::decoder_channels() const {
    return {widths.at(0), widths.at(1) / 2, widths.at(2) / 2, widths.at(3) / 2};
}

namespace {

std::string level(std::size_t k) { return "encoder.level" + std::to_string(k); }

std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ConfigError("not an unsigned integer list: '" + s + "'");
        }
    }
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
    const auto list = split_sizes(v);
    if (list.size() != 1) throw ConfigError("config key " + key + " expects one integer, got '" + v + "'");
    return list[0];
}

}  // namespace

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("invalid model config: " + what); };
    if (in_channels == 0) fail("in_channels must be >= 1");
    if (out_channels == 0) fail("out_channels must be >= 1");
    if (kernels_per_layer == 0 || base_kernels_per_layer == 0) fail("kernels per layer must be >= 1");
    if (widths.size() != 5) fail("expected 5 channel widths, got " + std::to_string(widths.size()));
    if (conv_groups.size() != 4) fail("expected 4 shuffled-conv group sizes, got " + std::to_string(conv_groups.size()));
    if (sa_groups.size() != 5) fail("expected 5 SA group sizes (len(G) = 5), got " + std::to_string(sa_groups.size()));
    for (std::size_t i = 0; i < 5; ++i) {
        if (widths[i] == 0) fail("channel width of level " + std::to_string(i + 1) + " is zero");
    }
    if (widths[4] % 2 != 0) fail("bottleneck width " + std::to_string(widths[4]) + " must be even");
    for (std::size_t i = 1; i < 4; ++i) {
        if (widths[i] % 2 != 0) fail("width " + std::to_string(widths[i]) + " must be even");
    }

    const auto lc = level_channels();
    for (std::size_t i = 0; i < 5; ++i) {
        if (attention == Attention::Shuffle) {
            const std::size_t g = sa_groups[i];
            if (g == 0 || lc[i] % (2 * g) != 0) {
                fail(level(i + 1) + ": channel width " + std::to_string(lc[i]) + " not divisible by 2*G = " +
                     std::to_string(2 * g));
            }
        } else if (cbam_reduction == 0 || lc[i] % cbam_reduction != 0 || lc[i] / cbam_reduction == 0) {
            fail(level(i + 1) + ": channel width " + std::to_string(lc[i]) + " not divisible by CBAM reduction " +
                 std::to_string(cbam_reduction));
        }
    }
    if (shuffled) {
        for (std::size_t k = 2; k <= 5; ++k) {
            try {
                ShuffledDepthwiseSeparableConv<float>::validate(level(k) + ".conv1", lc[k - 2], lc[k - 1],
                                                                kernels_per_layer, conv_groups[k - 2]);
            } catch (const ConfigError& e) {
                fail(e.what());
            }
        }
    }
    const auto dc = decoder_channels();
    for (std::size_t k = 1; k <= 4; ++k) {
        const std::size_t up = k == 4 ? lc[4] : dc[k];
        if ((lc[k - 1] + up) % 2 != 0) fail("decoder.level" + std::to_string(k) + " input width must be even");
        if (dc[k - 1] == 0) fail("decoder.level" + std::to_string(k) + " has zero width");
    }
}

std::string ModelConfig::to_kv() const {
    std::ostringstream os;
    os << "in_channels=" << in_channels << '\n'
       << "out_channels=" << out_channels << '\n'
       << "kernels_per_layer=" << kernels_per_layer << '\n'
       << "base_kernels_per_layer=" << base_kernels_per_layer << '\n'
       << "widths=" << join(widths) << '\n'
       << "conv_groups=" << join(conv_groups) << '\n'
       << "sa_groups=" << join(sa_groups) << '\n'
       << "attention=" << attention_name(attention) << '\n'
       << "shuffled=" << (shuffled ? 1 : 0) << '\n'
       << "cbam_reduction=" << cbam_reduction << '\n'
       << "seed=" << seed << '\n';
    return os.str();
}

ModelConfig ModelConfig::from_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed config line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("config block is missing key '" + key + "'");
        return it->second;
    };
    ModelConfig c;
    c.in_channels = to_size("in_channels", get("in_channels"));
    c.out_channels = to_size("out_channels", get("out_channels"));
    c.kernels_per_layer = to_size("kernels_per_layer", get("kernels_per_layer"));
    c.base_kernels_per_layer = to_size("base_kernels_per_layer", get("base_kernels_per_layer"));
    c.widths = split_sizes(get("widths"));
    c.conv_groups = split_sizes(get("conv_groups"));
    c.sa_groups = split_sizes(get("sa_groups"));
    c.attention = parse_attention(get("attention"));
    c.shuffled = to_size("shuffled", get("shuffled")) != 0;
    c.cbam_reduction = to_size("cbam_reduction", get("cbam_reduction"));
    c.seed = static_cast<std::uint64_t>(std::stoull(get("seed")));
    return c;
}

ModelConfig ModelConfig::standard(std::size_t outputs) {
    ModelConfig c;
    c.out_channels = outputs;
    return c;
}

ModelConfig ModelConfig::reduced(std::size_t outputs) {
    ModelConfig c = standard(outputs);
    c.kernels_per_layer = 2;
    return c;
}

ModelConfig ModelConfig::baseline(std::size_t outputs) {
    ModelConfig c = standard(outputs);
    c.kernels_per_layer = 2;
    c.shuffled = false;
    c.attention = Attention::Cbam;
    return c;
}

ModelConfig ModelConfig::cloud() {
    ModelConfig c = standard(6);
    c.in_channels = 4;
    return c;
}

ModelConfig ModelConfig::tiny(std::size_t in_channels, std::size_t outputs) {
    ModelConfig c;
    c.in_channels = in_channels;
    c.out_channels = outputs;
    c.widths = {8, 16, 32, 64, 128};
    c.conv_groups = {2, 2, 4, 4};
    c.sa_groups = {1, 2, 4, 8, 8};
    c.cbam_reduction = 4;
    return c;
}

// ---------------------------------------------------------------------------
// SSAUNet

template <typename T>
SSAUNet<T>::SSAUNet(const ModelConfig& config) : Module<T>("model"), config_(config) {
    config_.validate();
    Rng rng(config_.seed);
    const auto lc = config_.level_channels();
    const auto dc = config_.decoder_channels();

    for (std::size_t k = 1; k <= 5; ++k) {
        DoubleConvSpec spec;
        spec.in_channels = k == 1 ? config_.in_channels : lc[k - 2];
        spec.out_channels = lc[k - 1];
        const bool shuffled = config_.shuffled && k >= 2;
        spec.variant = shuffled ? BlockVariant::Shuffled : BlockVariant::Classic;
        spec.kernels_per_layer = shuffled || (!config_.shuffled && k >= 2) ? config_.kernels_per_layer
                                                                           : config_.base_kernels_per_layer;
        spec.shuffle_groups = shuffled ? config_.conv_groups[k - 2] : 1;
        enc_.push_back(std::make_unique<DoubleConvBlock<T>>(level(k), spec, rng));
        this->register_child(*enc_.back());

        const std::string att_name = level(k) + ".attention";
        if (config_.attention == Attention::Shuffle) {
            att_.push_back(std::make_unique<ShuffleAttention<T>>(att_name, lc[k - 1], config_.sa_groups[k - 1]));
        } else {
            att_.push_back(std::make_unique<Cbam<T>>(att_name, lc[k - 1], config_.cbam_reduction, rng));
        }
        this->register_child(*att_.back());
    }

    dec_.resize(4);
    for (std::size_t k = 4; k >= 1; --k) {
        DoubleConvSpec spec;
        const std::size_t up = k == 4 ? lc[4] : dc[k];
        spec.in_channels = lc[k - 1] + up;
        spec.mid_channels = spec.in_channels / 2;
        spec.out_channels = dc[k - 1];
        spec.kernels_per_layer = config_.base_kernels_per_layer;
        dec_[k - 1] = std::make_unique<DoubleConvBlock<T>>("decoder.level" + std::to_string(k), spec, rng);
        this->register_child(*dec_[k - 1]);
    }

    head_ = std::make_unique<Conv2dLayer<T>>("head", dc[0], config_.out_channels, 1, 1, 0, true, rng);
    this->register_child(*head_);
}

template <typename T>
std::vector<std::string> SSAUNet<T>::layer_names() const {
    std::vector<std::string> names;
    this->visit_modules([&](const Module<T>& m) {
        const std::string& n = m.name();
        if (n != "model") names.push_back(n);
    });
    return names;
}

template <typename T>
void SSAUNet<T>::copy_state_from(SSAUNet& other) {
    if (!(other.config_ == config_)) throw ConfigError("copy_state_from: model configurations differ");
    std::vector<BasicTensor<T>*> src;
    other.visit_parameters([&](Parameter<T>& p) { src.push_back(&p.value); });
    other.visit_buffers([&](const std::string&, BasicTensor<T>& t) { src.push_back(&t); });
    std::size_t i = 0;
    this->visit_parameters([&](Parameter<T>& p) { p.value = *src[i++]; });
    this->visit_buffers([&](const std::string&, BasicTensor<T>& t) { t = *src[i++]; });
}

template <typename T>
BasicTensor<T> SSAUNet<T>::do_forward(const BasicTensor<T>& x, const Pass<T>& pass) {
    const Shape& s = x.shape();
    if (s.c != config_.in_channels) {
        throw DimensionError("model expects " + std::to_string(config_.in_channels) + " input channels, got " +
                             s.str());
    }
    if (s.h % 16 != 0 || s.w % 16 != 0) {
        throw DimensionError("model input height and width must be divisible by 16, got " + s.str());
    }

    std::array<BasicTensor<T>, 5> skip;
    BasicTensor<T> y = x;
    for (std::size_t k = 1; k <= 5; ++k) {
        y = enc_[k - 1]->forward(y, pass);
        skip[k - 1] = att_[k - 1]->forward(y, pass);
        if (k < 5) y = max_pool_2x2(skip[k - 1], this->ctx(pool_[k - 1], pass));
    }
    y = std::move(skip[4]);
    for (std::size_t k = 4; k >= 1; --k) {
        auto up = bilinear_upsample_x2(y, this->ctx(up_[k - 1], pass));
        y = dec_[k - 1]->forward(concat_channels(skip[k - 1], up, this->ctx(cat_[k - 1], pass)), pass);
    }
    return head_->forward(y, pass);
}

template <typename T>
BasicTensor<T> SSAUNet<T>::do_backward(const BasicTensor<T>& grad_out) {
    std::array<BasicTensor<T>, 4> g_skip;
    BasicTensor<T> g = head_->backward(grad_out);
    for (std::size_t k = 1; k <= 4; ++k) {
        auto [gs, gu] = concat_channels_backward(cat_[k - 1], dec_[k - 1]->backward(g));
        g_skip[k - 1] = std::move(gs);
        g = bilinear_upsample_x2_backward(up_[k - 1], gu);
    }
    for (std::size_t k = 5; k >= 1; --k) {
        if (k < 5) {
            auto gp = max_pool_2x2_backward(pool_[k - 1], g);
            const auto& gs = g_skip[k - 1];
            for (std::size_t i = 0; i < gp.numel(); ++i) gp.ptr()[i] += gs.ptr()[i];
            g = std::move(gp);
        }
        g = enc_[k - 1]->backward(att_[k - 1]->backward(g));
    }
    return g;
}

template class SSAUNet<float>;
template class SSAUNet<double>;

// ---------------------------------------------------------------------------

Tensor persistence_predict(const Tensor& inputs, std::size_t outputs) {
    const Shape& s = inputs.shape();
    if (outputs == 0) throw ConfigError("persistence needs at least one output frame");
    Tensor out(Shape{s.n, outputs, s.h, s.w});
    for (std::size_t i = 0; i < s.n; ++i) {
        const float* last = inputs.plane(i, s.c - 1);
        for (std::size_t k = 0; k < outputs; ++k) std::copy_n(last, s.plane(), out.plane(i, k));
    }
    return out;
}

Tensor persistence_predict(const SampleWindow& window) {
    return persistence_predict(window.inputs, window.targets.shape().c);
}

std::vector<ParamAuditRow> audit_parameters(Model& model) {
    std::vector<ParamAuditRow> rows;
    for (std::size_t k = 1; k <= 5; ++k) {
        rows.push_back({level(k), model.encoder_block(k).param_count()});
        rows.push_back({level(k) + ".attention", model.encoder_attention(k).param_count()});
    }
    for (std::size_t k = 4; k >= 1; --k) {
        rows.push_back({"decoder.level" + std::to_string(k), model.decoder_block(k).param_count()});
    }
    rows.push_back({"head", model.head().param_count()});
    rows.push_back({"total", model.param_count()});
    return rows;
}

}  // namespace ssa
