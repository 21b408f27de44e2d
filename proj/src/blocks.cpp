#include "ssa/blocks.hpp"

namespace ssa {

// ---------------------------------------------------------------------------

template <typename T>
DepthwiseSeparableConv<T>::DepthwiseSeparableConv(std::string name, std::size_t in_channels,
                                                  std::size_t out_channels, std::size_t kernels_per_layer, Rng& rng)
    : Module<T>(std::move(name)),
      depthwise_(this->child_name("depthwise"), in_channels, in_channels * kernels_per_layer, 3, in_channels, 1,
                 true, rng),
      pointwise_(this->child_name("pointwise"), in_channels * kernels_per_layer, out_channels, 1, 1, 0, true, rng) {
    if (kernels_per_layer == 0) throw ConfigError(this->name() + ": kernels per layer must be >= 1");
    this->register_child(depthwise_);
    this->register_child(pointwise_);
}

template <typename T>
std::size_t DepthwiseSeparableConv<T>::expected_params(std::size_t in, std::size_t out, std::size_t km) {
    return in * km * 9 + in * km + out * in * km + out;
}

template <typename T>
BasicTensor<T> DepthwiseSeparableConv<T>::do_forward(const BasicTensor<T>& x, const Pass<T>& pass) {
    return pointwise_.forward(depthwise_.forward(x, pass), pass);
}

template <typename T>
BasicTensor<T> DepthwiseSeparableConv<T>::do_backward(const BasicTensor<T>& grad_out) {
    return depthwise_.backward(pointwise_.backward(grad_out));
}

// ---------------------------------------------------------------------------

template <typename T>
void ShuffledDepthwiseSeparableConv<T>::validate(const std::string& name, std::size_t in, std::size_t out,
                                                 std::size_t km, std::size_t groups) {
    if (groups == 0) throw ConfigError(name + ": shuffle groups must be >= 1");
    if ((in * km) % groups != 0) {
        throw ConfigError(name + ": depthwise output channels " + std::to_string(in * km) +
                          " not divisible by shuffle groups " + std::to_string(groups));
    }
    if (out % groups != 0) {
        throw ConfigError(name + ": output channels " + std::to_string(out) + " not divisible by shuffle groups " +
                          std::to_string(groups));
    }
}

namespace {

template <typename T>
std::size_t checked_groups(const std::string& name, std::size_t in, std::size_t out, std::size_t km,
                           std::size_t groups) {
    ShuffledDepthwiseSeparableConv<T>::validate(name, in, out, km, groups);
    return groups;
}

}  // namespace

template <typename T>
ShuffledDepthwiseSeparableConv<T>::ShuffledDepthwiseSeparableConv(std::string name, std::size_t in_channels,
                                                                  std::size_t out_channels,
                                                                  std::size_t kernels_per_layer, std::size_t groups,
                                                                  Rng& rng)
    : Module<T>(std::move(name)),
      groups_(checked_groups<T>(this->name(), in_channels, out_channels, kernels_per_layer, groups)),
      depthwise_(this->child_name("depthwise"), in_channels, in_channels * kernels_per_layer, 3, in_channels, 1,
                 true, rng),
      pointwise_(this->child_name("pointwise"), in_channels * kernels_per_layer, out_channels, 1, groups, 0, true,
                 rng) {
    this->register_child(depthwise_);
    this->register_child(pointwise_);
}

template <typename T>
std::size_t ShuffledDepthwiseSeparableConv<T>::expected_params(std::size_t in, std::size_t out, std::size_t km,
                                                               std::size_t groups) {
    return in * km * 9 + in * km + out * (in * km) / groups + out;
}

template <typename T>
BasicTensor<T> ShuffledDepthwiseSeparableConv<T>::do_forward(const BasicTensor<T>& x, const Pass<T>& pass) {
    auto y = pointwise_.forward(depthwise_.forward(x, pass), pass);
    return channel_shuffle(y, groups_, this->ctx(shuffle_ctx_, pass));
}

template <typename T>
BasicTensor<T> ShuffledDepthwiseSeparableConv<T>::do_backward(const BasicTensor<T>& grad_out) {
    return depthwise_.backward(pointwise_.backward(channel_shuffle_backward(shuffle_ctx_, grad_out)));
}

// ---------------------------------------------------------------------------

namespace {

std::size_t mid_of(const DoubleConvSpec& s) { return s.mid_channels ? s.mid_channels : s.out_channels; }

template <typename T>
std::unique_ptr<Module<T>> make_first_conv(const std::string& name, const DoubleConvSpec& s, Rng& rng) {
    if (s.variant == BlockVariant::Shuffled) {
        return std::make_unique<ShuffledDepthwiseSeparableConv<T>>(name, s.in_channels, mid_of(s),
                                                                   s.kernels_per_layer, s.shuffle_groups, rng);
    }
    return std::make_unique<DepthwiseSeparableConv<T>>(name, s.in_channels, mid_of(s), s.kernels_per_layer, rng);
}

}  // namespace

template <typename T>
DoubleConvBlock<T>::DoubleConvBlock(std::string name, const DoubleConvSpec& spec, Rng& rng)
    : Module<T>(std::move(name)),
      spec_(spec),
      conv1_(make_first_conv<T>(this->child_name("conv1"), spec, rng)),
      bn1_(this->child_name("bn1"), mid_of(spec)),
      conv2_(this->child_name("conv2"), mid_of(spec), spec.out_channels, spec.kernels_per_layer, rng),
      bn2_(this->child_name("bn2"), spec.out_channels) {
    this->register_child(*conv1_);
    this->register_child(bn1_);
    this->register_child(conv2_);
    this->register_child(bn2_);
}

template <typename T>
BasicTensor<T> DoubleConvBlock<T>::do_forward(const BasicTensor<T>& x, const Pass<T>& pass) {
    auto y = relu(bn1_.forward(conv1_->forward(x, pass), pass), this->ctx(relu1_, pass));
    return relu(bn2_.forward(conv2_.forward(y, pass), pass), this->ctx(relu2_, pass));
}

template <typename T>
BasicTensor<T> DoubleConvBlock<T>::do_backward(const BasicTensor<T>& grad_out) {
    auto g = conv2_.backward(bn2_.backward(relu_backward(relu2_, grad_out)));
    return conv1_->backward(bn1_.backward(relu_backward(relu1_, g)));
}

// ---------------------------------------------------------------------------

template <typename T>
std::size_t ShuffleAttention<T>::expected_params(std::size_t channels, std::size_t groups) {
    return 6 * (channels / (2 * groups));
}

template <typename T>
ShuffleAttention<T>::ShuffleAttention(std::string name, std::size_t channels, std::size_t groups)
    : Module<T>(std::move(name)), channels_(channels), groups_(groups) {
    if (groups == 0 || channels % (2 * groups) != 0) {
        throw ConfigError(this->name() + ": channels " + std::to_string(channels) + " not divisible by 2*G = " +
                          std::to_string(2 * groups));
    }
    const std::size_t half = channels / (2 * groups);
    cweight_.value = channel_vector<T>(half, T(0));
    cbias_.value = channel_vector<T>(half, T(1));
    sweight_.value = channel_vector<T>(half, T(0));
    sbias_.value = channel_vector<T>(half, T(1));
    gn_gamma_.value = channel_vector<T>(half, T(1));
    gn_beta_.value = channel_vector<T>(half, T(0));
    this->register_parameter(cweight_, "channel_weight");
    this->register_parameter(cbias_, "channel_bias");
    this->register_parameter(sweight_, "spatial_weight");
    this->register_parameter(sbias_, "spatial_bias");
    this->register_parameter(gn_gamma_, "norm.weight");
    this->register_parameter(gn_beta_, "norm.bias");
}

template <typename T>
BasicTensor<T> ShuffleAttention<T>::do_forward(const BasicTensor<T>& x, const Pass<T>& pass) {
    const Shape& s = x.shape();
    if (s.c != channels_) {
        throw DimensionError(this->name() + ": expected " + std::to_string(channels_) + " channels, got " +
                             std::to_string(s.c));
    }
    input_shape_ = s;
    const std::size_t cg = s.c / groups_;
    const std::size_t half = cg / 2;
    // (n, c, h, w) and (n*G, c/G, h, w) share the same memory layout
    const auto grouped = x.reshaped(Shape{s.n * groups_, cg, s.h, s.w});

    const auto a = slice_channels(grouped, 0, half, this->ctx(slice_a_, pass));
    const auto b = slice_channels(grouped, half, half, this->ctx(slice_b_, pass));

    const auto pooled = global_avg_pool(a, this->ctx(pool_, pass));
    const auto gate_a = sigmoid(channel_affine(pooled, cweight_.value, cbias_.value, this->ctx(affine_a_, pass)),
                                this->ctx(sig_a_, pass));
    const auto ya = multiply(a, gate_a, this->ctx(mul_a_, pass));

    const auto normed = group_norm_per_channel(b, gn_gamma_.value, gn_beta_.value, 1e-5, this->ctx(norm_, pass));
    const auto gate_b = sigmoid(channel_affine(normed, sweight_.value, sbias_.value, this->ctx(affine_b_, pass)),
                                this->ctx(sig_b_, pass));
    const auto yb = multiply(b, gate_b, this->ctx(mul_b_, pass));

    auto joined = concat_channels(ya, yb, this->ctx(cat_, pass)).reshaped(s);
    return channel_shuffle(joined, groups_, this->ctx(shuffle_, pass));
}

template <typename T>
BasicTensor<T> ShuffleAttention<T>::do_backward(const BasicTensor<T>& grad_out) {
    const Shape& s = input_shape_;
    const std::size_t cg = s.c / groups_;
    auto g = channel_shuffle_backward(shuffle_, grad_out).reshaped(Shape{s.n * groups_, cg, s.h, s.w});
    auto [g_ya, g_yb] = concat_channels_backward(cat_, g);

    auto [g_b_direct, g_gate_b] = multiply_backward(mul_b_, g_yb);
    auto gb_aff = channel_affine_backward(affine_b_, sigmoid_backward(sig_b_, g_gate_b));
    sweight_.accumulate(gb_aff.scale);
    sbias_.accumulate(gb_aff.shift);
    auto gn = group_norm_backward(norm_, gb_aff.input);
    gn_gamma_.accumulate(gn.gamma);
    gn_beta_.accumulate(gn.beta);
    auto g_b = add(g_b_direct, gn.input);

    auto [g_a_direct, g_gate_a] = multiply_backward(mul_a_, g_ya);
    auto ga_aff = channel_affine_backward(affine_a_, sigmoid_backward(sig_a_, g_gate_a));
    cweight_.accumulate(ga_aff.scale);
    cbias_.accumulate(ga_aff.shift);
    auto g_a = add(g_a_direct, global_avg_pool_backward(pool_, ga_aff.input));

    auto gx = add(slice_channels_backward(slice_a_, g_a), slice_channels_backward(slice_b_, g_b));
    return std::move(gx).reshaped(s);
}

// ---------------------------------------------------------------------------

template <typename T>
std::size_t Cbam<T>::expected_params(std::size_t channels, std::size_t reduction, std::size_t kernel) {
    const std::size_t hidden = channels / reduction;
    return channels * hidden + hidden + hidden * channels + channels + 2 * kernel * kernel + 1;
}

template <typename T>
Cbam<T>::Cbam(std::string name, std::size_t channels, std::size_t reduction, Rng& rng, std::size_t kernel)
    : Module<T>(std::move(name)), kernel_(kernel) {
    if (reduction == 0 || channels % reduction != 0) {
        throw ConfigError(this->name() + ": channels " + std::to_string(channels) +
                          " not divisible by reduction ratio " + std::to_string(reduction));
    }
    const std::size_t hidden = channels / reduction;
    fc1_w_.value = BasicTensor<T>(Shape{hidden, channels, 1, 1});
    kaiming_uniform(fc1_w_.value, channels, rng);
    fc1_b_.value = channel_vector<T>(hidden, T(0));
    fc2_w_.value = BasicTensor<T>(Shape{channels, hidden, 1, 1});
    kaiming_uniform(fc2_w_.value, hidden, rng);
    fc2_b_.value = channel_vector<T>(channels, T(0));
    sp_w_.value = BasicTensor<T>(Shape{1, 2, kernel, kernel});
    kaiming_uniform(sp_w_.value, 2 * kernel * kernel, rng);
    sp_b_.value = channel_vector<T>(1, T(0));
    this->register_parameter(fc1_w_, "mlp.fc1.weight");
    this->register_parameter(fc1_b_, "mlp.fc1.bias");
    this->register_parameter(fc2_w_, "mlp.fc2.weight");
    this->register_parameter(fc2_b_, "mlp.fc2.bias");
    this->register_parameter(sp_w_, "spatial.weight");
    this->register_parameter(sp_b_, "spatial.bias");
}

template <typename T>
BasicTensor<T> Cbam<T>::mlp_forward(const BasicTensor<T>& v, OpContext<T>* c1, OpContext<T>* r, OpContext<T>* c2) {
    auto hdn = relu(conv2d(v, fc1_w_.value, &fc1_b_.value, {}, c1), r);
    return conv2d(hdn, fc2_w_.value, &fc2_b_.value, {}, c2);
}

template <typename T>
BasicTensor<T> Cbam<T>::mlp_backward(const BasicTensor<T>& g, OpContext<T>& c1, OpContext<T>& r, OpContext<T>& c2) {
    auto g2 = conv2d_backward(c2, g);
    fc2_w_.accumulate(g2.weight);
    fc2_b_.accumulate(g2.bias);
    auto g1 = conv2d_backward(c1, relu_backward(r, g2.input));
    fc1_w_.accumulate(g1.weight);
    fc1_b_.accumulate(g1.bias);
    return std::move(g1.input);
}

template <typename T>
BasicTensor<T> Cbam<T>::do_forward(const BasicTensor<T>& x, const Pass<T>& pass) {
    auto c = [&](OpContext<T>& o) { return this->ctx(o, pass); };
    const auto avg = mlp_forward(global_avg_pool(x, c(avg_)), c(avg_fc1_), c(avg_relu_), c(avg_fc2_));
    const auto mx = mlp_forward(global_max_pool(x, c(max_)), c(max_fc1_), c(max_relu_), c(max_fc2_));
    const auto gate_c = sigmoid(add(avg, mx, c(add_)), c(sig_c_));
    const auto x1 = multiply(x, gate_c, c(mul_c_));

    const auto maps = concat_channels(channel_mean(x1, c(cmean_)), channel_max(x1, c(cmax_)), c(cat_));
    const Conv2dParams sp{1, kernel_ / 2, 1};
    const auto gate_s = sigmoid(conv2d(maps, sp_w_.value, &sp_b_.value, sp, c(sp_conv_)), c(sig_s_));
    return multiply(x1, gate_s, c(mul_s_));
}

template <typename T>
BasicTensor<T> Cbam<T>::do_backward(const BasicTensor<T>& grad_out) {
    auto [g_x1_direct, g_gate_s] = multiply_backward(mul_s_, grad_out);
    auto gsp = conv2d_backward(sp_conv_, sigmoid_backward(sig_s_, g_gate_s));
    sp_w_.accumulate(gsp.weight);
    sp_b_.accumulate(gsp.bias);
    auto [g_mean, g_max] = concat_channels_backward(cat_, gsp.input);
    auto g_x1 = add(add(g_x1_direct, channel_mean_backward(cmean_, g_mean)), channel_max_backward(cmax_, g_max));

    auto [g_x_direct, g_gate_c] = multiply_backward(mul_c_, g_x1);
    auto g_sum = sigmoid_backward(sig_c_, g_gate_c);
    auto [g_avg, g_mx] = add_backward(add_, g_sum);
    auto g_from_avg = global_avg_pool_backward(avg_, mlp_backward(g_avg, avg_fc1_, avg_relu_, avg_fc2_));
    auto g_from_max = global_max_pool_backward(max_, mlp_backward(g_mx, max_fc1_, max_relu_, max_fc2_));
    return add(add(g_x_direct, g_from_avg), g_from_max);
}

template class DepthwiseSeparableConv<float>;
template class DepthwiseSeparableConv<double>;
template class ShuffledDepthwiseSeparableConv<float>;
template class ShuffledDepthwiseSeparableConv<double>;
template class DoubleConvBlock<float>;
template class DoubleConvBlock<double>;
template class ShuffleAttention<float>;
template class ShuffleAttention<double>;
template class Cbam<float>;
template class Cbam<double>;

}  // namespace ssa
