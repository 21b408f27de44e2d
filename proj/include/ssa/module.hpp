#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ssa/ops.hpp"
#include "ssa/tensor.hpp"

namespace ssa {

/// A named trainable tensor and its gradient accumulator.
template <typename T>
struct Parameter {
    std::string name;
    BasicTensor<T> value;
    BasicTensor<T> grad;

    void zero_grad() { grad = BasicTensor<T>(value.shape()); }
    void accumulate(const BasicTensor<T>& g);
};

/// Records one named layer's output during forward and the gradient arriving
/// at that output during backward.
template <typename T>
struct Capture {
    std::string layer;
    BasicTensor<T> activation;
    BasicTensor<T> gradient;
    bool seen_forward = false;
    bool seen_backward = false;
};

template <typename T>
struct Pass {
    Mode mode = Mode::Eval;
    bool record = false;  // keep op contexts so backward can run
    std::vector<Capture<T>*> captures;
};

using Rng = std::mt19937_64;

/// Base of every layer. Modules register their parameters, buffers and child
/// modules at construction; they are neither copyable nor movable because the
/// registry holds member addresses.
template <typename T>
class Module {
public:
    explicit Module(std::string name) : name_(std::move(name)) {}
    virtual ~Module() = default;
    Module(const Module&) = delete;
    Module& operator=(const Module&) = delete;

    const std::string& name() const { return name_; }

    BasicTensor<T> forward(const BasicTensor<T>& x, const Pass<T>& pass);
    /// Accumulates parameter gradients and returns dL/d(input).
    BasicTensor<T> backward(const BasicTensor<T>& grad_out);

    void visit_parameters(const std::function<void(Parameter<T>&)>& fn);
    void visit_buffers(const std::function<void(const std::string&, BasicTensor<T>&)>& fn);
    /// Pre-order walk over this module and all descendants.
    void visit_modules(const std::function<void(const Module&)>& fn) const;

    std::size_t param_count();
    void zero_grad();

protected:
    virtual BasicTensor<T> do_forward(const BasicTensor<T>& x, const Pass<T>& pass) = 0;
    virtual BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) = 0;

    void register_parameter(Parameter<T>& p, const std::string& local);
    void register_buffer(BasicTensor<T>& t, const std::string& local);
    void register_child(Module& child) { children_.push_back(&child); }
    std::string child_name(const std::string& local) const { return name_ + "." + local; }

    static OpContext<T>* ctx(OpContext<T>& c, const Pass<T>& pass) { return pass.record ? &c : nullptr; }

private:
    std::string name_;
    std::vector<Parameter<T>*> params_;
    std::vector<std::pair<std::string, BasicTensor<T>*>> buffers_;
    std::vector<Module*> children_;
    Capture<T>* pending_capture_ = nullptr;
};

/// Kaiming-uniform (fan-in, ReLU gain) weights and zero bias.
template <typename T>
class Conv2dLayer : public Module<T> {
public:
    Conv2dLayer(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                std::size_t groups, std::size_t padding, bool bias, Rng& rng);

    Parameter<T>& weight() { return weight_; }
    Parameter<T>* bias() { return has_bias_ ? &bias_ : nullptr; }
    std::size_t groups() const { return params_.groups; }

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& x, const Pass<T>& pass) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;

private:
    Parameter<T> weight_;
    Parameter<T> bias_;
    bool has_bias_;
    Conv2dParams params_;
    OpContext<T> ctx_;
};

template <typename T>
class BatchNorm2d : public Module<T> {
public:
    BatchNorm2d(std::string name, std::size_t channels, BatchNormParams params = {});

    BatchNormState<T>& state() { return state_; }

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& x, const Pass<T>& pass) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;

private:
    Parameter<T> gamma_;
    Parameter<T> beta_;
    BatchNormState<T> state_;
    BatchNormParams params_;
    OpContext<T> ctx_;
};

template <typename T>
BasicTensor<T> channel_vector(std::size_t channels, T value) {
    return BasicTensor<T>(Shape{1, channels, 1, 1}, value);
}

template <typename T>
void kaiming_uniform(BasicTensor<T>& w, std::size_t fan_in, Rng& rng);

}  // namespace ssa
