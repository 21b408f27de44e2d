#include "ssa/module.hpp"

#include <cmath>

namespace ssa {

template <typename T>
void Parameter<T>::accumulate(const BasicTensor<T>& g) {
    require_same_shape(g.shape(), value.shape(), name.c_str());
    if (grad.empty()) {
        grad = g;
        return;
    }
    for (std::size_t i = 0; i < g.numel(); ++i) grad.ptr()[i] += g.ptr()[i];
}

template <typename T>
BasicTensor<T> Module<T>::forward(const BasicTensor<T>& x, const Pass<T>& pass) {
    BasicTensor<T> out = do_forward(x, pass);
    pending_capture_ = nullptr;
    for (auto* cap : pass.captures) {
        if (cap->layer != name_) continue;
        cap->activation = out;
        cap->seen_forward = true;
        if (pass.record) pending_capture_ = cap;
    }
    return out;
}

template <typename T>
BasicTensor<T> Module<T>::backward(const BasicTensor<T>& grad_out) {
    if (pending_capture_) {
        pending_capture_->gradient = grad_out;
        pending_capture_->seen_backward = true;
        pending_capture_ = nullptr;
    }
    return do_backward(grad_out);
}

template <typename T>
void Module<T>::register_parameter(Parameter<T>& p, const std::string& local) {
    p.name = child_name(local);
    params_.push_back(&p);
}

template <typename T>
void Module<T>::register_buffer(BasicTensor<T>& t, const std::string& local) {
    buffers_.emplace_back(child_name(local), &t);
}

template <typename T>
void Module<T>::visit_parameters(const std::function<void(Parameter<T>&)>& fn) {
    for (auto* p : params_) fn(*p);
    for (auto* c : children_) c->visit_parameters(fn);
}

template <typename T>
void Module<T>::visit_buffers(const std::function<void(const std::string&, BasicTensor<T>&)>& fn) {
    for (auto& [name, t] : buffers_) fn(name, *t);
    for (auto* c : children_) c->visit_buffers(fn);
}

template <typename T>
void Module<T>::visit_modules(const std::function<void(const Module&)>& fn) const {
    fn(*this);
    for (const auto* c : children_) c->visit_modules(fn);
}

template <typename T>
std::size_t Module<T>::param_count() {
    std::size_t n = 0;
    visit_parameters([&](Parameter<T>& p) { n += p.value.numel(); });
    return n;
}

template <typename T>
void Module<T>::zero_grad() {
    visit_parameters([](Parameter<T>& p) { p.zero_grad(); });
}

template <typename T>
void kaiming_uniform(BasicTensor<T>& w, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : w.data()) v = static_cast<T>(dist(rng));
}

template <typename T>
Conv2dLayer<T>::Conv2dLayer(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                            std::size_t groups, std::size_t padding, bool bias, Rng& rng)
    : Module<T>(std::move(name)), has_bias_(bias), params_{1, padding, groups} {
    if (groups == 0 || in_channels % groups != 0 || out_channels % groups != 0) {
        throw ConfigError(this->name() + ": channels " + std::to_string(in_channels) + " -> " +
                          std::to_string(out_channels) + " not divisible by groups " + std::to_string(groups));
    }
    weight_.value = BasicTensor<T>(Shape{out_channels, in_channels / groups, kernel, kernel});
    kaiming_uniform(weight_.value, in_channels / groups * kernel * kernel, rng);
    this->register_parameter(weight_, "weight");
    if (has_bias_) {
        bias_.value = channel_vector<T>(out_channels, T(0));
        this->register_parameter(bias_, "bias");
    }
}

template <typename T>
BasicTensor<T> Conv2dLayer<T>::do_forward(const BasicTensor<T>& x, const Pass<T>& pass) {
    return conv2d(x, weight_.value, has_bias_ ? &bias_.value : nullptr, params_, this->ctx(ctx_, pass));
}

template <typename T>
BasicTensor<T> Conv2dLayer<T>::do_backward(const BasicTensor<T>& grad_out) {
    auto g = conv2d_backward(ctx_, grad_out);
    weight_.accumulate(g.weight);
    if (has_bias_) bias_.accumulate(g.bias);
    return std::move(g.input);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, std::size_t channels, BatchNormParams params)
    : Module<T>(std::move(name)), state_(channels), params_(params) {
    gamma_.value = channel_vector<T>(channels, T(1));
    beta_.value = channel_vector<T>(channels, T(0));
    this->register_parameter(gamma_, "weight");
    this->register_parameter(beta_, "bias");
    this->register_buffer(state_.running_mean, "running_mean");
    this->register_buffer(state_.running_var, "running_var");
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::do_forward(const BasicTensor<T>& x, const Pass<T>& pass) {
    return batch_norm(x, gamma_.value, beta_.value, state_, pass.mode, params_, this->ctx(ctx_, pass));
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::do_backward(const BasicTensor<T>& grad_out) {
    auto g = batch_norm_backward(ctx_, grad_out);
    gamma_.accumulate(g.gamma);
    beta_.accumulate(g.beta);
    return std::move(g.input);
}

template struct Parameter<float>;
template struct Parameter<double>;
template class Module<float>;
template class Module<double>;
template class Conv2dLayer<float>;
template class Conv2dLayer<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template void kaiming_uniform(BasicTensor<float>&, std::size_t, Rng&);
template void kaiming_uniform(BasicTensor<double>&, std::size_t, Rng&);

}  // namespace ssa
