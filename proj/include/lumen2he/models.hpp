// Copyright (c) 2026 lumen2he contributors
// SPDX-License-Identifier: Apache-2.0
//
// ResNet encoder-decoder generators and PatchGAN discriminators.
#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lumen2he/autodiff.hpp"
#include "lumen2he/rng.hpp"

namespace lumen2he {

struct GeneratorConfig {
    int in_channels = 3;
    int base_filters = 64;
    int n_residual_blocks = 9;
    int downsample_stages = 2;

    int bottleneck_filters() const { return base_filters << downsample_stages; }
};

struct DiscriminatorConfig {
    int in_channels = 3;
    int base_filters = 64;
    int downsample_stages = 3; // initial conv plus two further stride-2 blocks
    double leaky_slope = 0.2;

    int final_filters() const { return base_filters << (downsample_stages - 1); }
};

template <typename T>
struct Param {
    std::string name;
    Var<T> var;
};

namespace detail {

template <typename T>
struct Layer {
    virtual ~Layer() = default;
    virtual Var<T> apply(const Var<T>& x) const = 0;
};

template <typename T>
struct ConvLayer final : Layer<T> {
    Var<T> weight, bias;
    int stride, pad;
    Var<T> apply(const Var<T>& x) const override { return conv2d(x, weight, bias, stride, pad); }
};

template <typename T>
struct ConvTransposeLayer final : Layer<T> {
    Var<T> weight, bias;
    int stride, pad, out_pad;
    Var<T> apply(const Var<T>& x) const override {
        return conv_transpose2d(x, weight, bias, stride, pad, out_pad);
    }
};

template <typename T>
struct InstanceNormLayer final : Layer<T> {
    Var<T> apply(const Var<T>& x) const override { return instance_norm(x); }
};

template <typename T>
struct ReluLayer final : Layer<T> {
    Var<T> apply(const Var<T>& x) const override { return relu(x); }
};

template <typename T>
struct LeakyReluLayer final : Layer<T> {
    T slope;
    Var<T> apply(const Var<T>& x) const override { return leaky_relu(x, slope); }
};

template <typename T>
struct TanhLayer final : Layer<T> {
    Var<T> apply(const Var<T>& x) const override { return tanh_act(x); }
};

template <typename T>
struct ReflectPadLayer final : Layer<T> {
    int pad;
    Var<T> apply(const Var<T>& x) const override { return reflection_pad2d(x, pad); }
};

/// x + body(x); the body carries no activation after the final norm, so with
/// all-zero convolution weights the block is exactly the identity map.
template <typename T>
struct ResidualBlock final : Layer<T> {
    std::vector<std::unique_ptr<Layer<T>>> body;
    Var<T> apply(const Var<T>& x) const override {
        Var<T> y = x;
        for (const auto& l : body) y = l->apply(y);
        return add(x, y);
    }
};

} // namespace detail

/// A feed-forward stack with named parameters. Forward is read-only with
/// respect to parameters; training mutates them through the optimizer only.
template <typename T>
class Network {
public:
    Network() = default;
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    Var<T> forward(const Var<T>& x) const {
        if (x->value.c() != in_channels_)
            throw InvalidInputError("forward: input has " + std::to_string(x->value.c()) +
                                    " channels, network expects " + std::to_string(in_channels_));
        Var<T> y = x;
        for (const auto& l : layers_) y = l->apply(y);
        return y;
    }

    /// Inference convenience: no tape, plain tensors.
    Tensor<T> forward(const Tensor<T>& x) const {
        NoGradGuard ng;
        return forward(constant(Tensor<T>(x)))->value;
    }

    std::vector<Param<T>>& params() { return params_; }
    const std::vector<Param<T>>& params() const { return params_; }

    void set_requires_grad(bool v) {
        for (auto& p : params_) p.var->requires_grad = v;
    }

    void zero_grad() {
        for (auto& p : params_) {
            p.var->ensure_grad();
            p.var->grad.set_zero();
        }
    }

    int input_channels() const { return in_channels_; }

    // Builder hooks.
    void set_input_channels(int c) { in_channels_ = c; }
    void add_layer(std::unique_ptr<detail::Layer<T>> l) { layers_.push_back(std::move(l)); }
    void register_param(std::string name, const Var<T>& v) { params_.push_back({std::move(name), v}); }

private:
    int in_channels_ = 3;
    std::vector<std::unique_ptr<detail::Layer<T>>> layers_;
    std::vector<Param<T>> params_;
};

namespace detail {

template <typename T>
Var<T> init_weight(int n, int c, int h, int w, Rng& rng) {
    Tensor<T> t(n, c, h, w);
    for (std::size_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<T>(rng.normal(0.0, 0.02));
    return make_var(std::move(t), true);
}

template <typename T>
Var<T> init_bias(int cout) {
    return make_var(Tensor<T>(1, cout, 1, 1), true);
}

template <typename T>
std::unique_ptr<ConvLayer<T>> make_conv(Network<T>& net, const std::string& name, int cin,
                                        int cout, int k, int stride, int pad, Rng& rng) {
    auto l = std::make_unique<ConvLayer<T>>();
    l->weight = init_weight<T>(cout, cin, k, k, rng);
    l->bias = init_bias<T>(cout);
    l->stride = stride;
    l->pad = pad;
    net.register_param(name + ".weight", l->weight);
    net.register_param(name + ".bias", l->bias);
    return l;
}

template <typename T>
std::unique_ptr<ConvTransposeLayer<T>> make_deconv(Network<T>& net, const std::string& name,
                                                   int cin, int cout, int k, int stride, int pad,
                                                   int out_pad, Rng& rng) {
    auto l = std::make_unique<ConvTransposeLayer<T>>();
    l->weight = init_weight<T>(cin, cout, k, k, rng);
    l->bias = init_bias<T>(cout);
    l->stride = stride;
    l->pad = pad;
    l->out_pad = out_pad;
    net.register_param(name + ".weight", l->weight);
    net.register_param(name + ".bias", l->bias);
    return l;
}

template <typename T>
std::unique_ptr<ReflectPadLayer<T>> make_pad(int pad) {
    auto l = std::make_unique<ReflectPadLayer<T>>();
    l->pad = pad;
    return l;
}

template <typename T>
std::unique_ptr<LeakyReluLayer<T>> make_leaky(T slope) {
    auto l = std::make_unique<LeakyReluLayer<T>>();
    l->slope = slope;
    return l;
}

} // namespace detail

/// ResNet generator: reflection-padded 7x7 stem (base filters), two stride-2
/// 3x3 downsampling blocks doubling filters, N residual blocks at the
/// bottleneck width, two stride-2 transposed-conv upsampling blocks, and a
/// reflection-padded 7x7 head with tanh. Instance norm throughout, no
/// learnable affine terms. Weights Normal(0, 0.02), biases zero.
template <typename T>
Network<T> build_generator(const GeneratorConfig& cfg, Rng& rng) {
    if (cfg.in_channels < 1 || cfg.base_filters < 1 || cfg.n_residual_blocks < 0 ||
        cfg.downsample_stages < 1)
        throw InvalidConfigError("build_generator: invalid generator config");

    Network<T> net;
    net.set_input_channels(cfg.in_channels);
    using namespace detail;

    net.add_layer(make_pad<T>(3));
    net.add_layer(make_conv(net, "stem.conv", cfg.in_channels, cfg.base_filters, 7, 1, 0, rng));
    net.add_layer(std::make_unique<InstanceNormLayer<T>>());
    net.add_layer(std::make_unique<ReluLayer<T>>());

    int filters = cfg.base_filters;
    for (int i = 0; i < cfg.downsample_stages; ++i) {
        const std::string name = "down" + std::to_string(i + 1) + ".conv";
        net.add_layer(make_conv(net, name, filters, filters * 2, 3, 2, 1, rng));
        net.add_layer(std::make_unique<InstanceNormLayer<T>>());
        net.add_layer(std::make_unique<ReluLayer<T>>());
        filters *= 2;
    }

    for (int i = 0; i < cfg.n_residual_blocks; ++i) {
        const std::string name = "res" + std::to_string(i + 1);
        auto block = std::make_unique<ResidualBlock<T>>();
        block->body.push_back(make_pad<T>(1));
        block->body.push_back(make_conv(net, name + ".conv1", filters, filters, 3, 1, 0, rng));
        block->body.push_back(std::make_unique<InstanceNormLayer<T>>());
        block->body.push_back(std::make_unique<ReluLayer<T>>());
        block->body.push_back(make_pad<T>(1));
        block->body.push_back(make_conv(net, name + ".conv2", filters, filters, 3, 1, 0, rng));
        block->body.push_back(std::make_unique<InstanceNormLayer<T>>());
        net.add_layer(std::move(block));
    }

    for (int i = 0; i < cfg.downsample_stages; ++i) {
        const std::string name = "up" + std::to_string(i + 1) + ".deconv";
        net.add_layer(make_deconv(net, name, filters, filters / 2, 3, 2, 1, 1, rng));
        net.add_layer(std::make_unique<InstanceNormLayer<T>>());
        net.add_layer(std::make_unique<ReluLayer<T>>());
        filters /= 2;
    }

    net.add_layer(make_pad<T>(3));
    net.add_layer(make_conv(net, "head.conv", filters, cfg.in_channels, 7, 1, 0, rng));
    net.add_layer(std::make_unique<TanhLayer<T>>());
    return net;
}

/// PatchGAN discriminator: 4x4 stride-2 convs (pad 1), LeakyReLU(slope)
/// everywhere, instance norm on every downsampling block except the first,
/// and a final 4x4 stride-1 conv to a single-channel score map with no
/// activation.
template <typename T>
Network<T> build_discriminator(const DiscriminatorConfig& cfg, Rng& rng) {
    if (cfg.in_channels < 1 || cfg.base_filters < 1 || cfg.downsample_stages < 1 ||
        cfg.leaky_slope <= 0.0 || cfg.leaky_slope >= 1.0)
        throw InvalidConfigError("build_discriminator: invalid discriminator config");

    Network<T> net;
    net.set_input_channels(cfg.in_channels);
    using namespace detail;
    const T slope = static_cast<T>(cfg.leaky_slope);

    int filters = cfg.base_filters;
    net.add_layer(make_conv(net, "block1.conv", cfg.in_channels, filters, 4, 2, 1, rng));
    net.add_layer(make_leaky<T>(slope));

    for (int i = 1; i < cfg.downsample_stages; ++i) {
        const std::string name = "block" + std::to_string(i + 1) + ".conv";
        net.add_layer(make_conv(net, name, filters, filters * 2, 4, 2, 1, rng));
        net.add_layer(std::make_unique<InstanceNormLayer<T>>());
        net.add_layer(make_leaky<T>(slope));
        filters *= 2;
    }

    net.add_layer(make_conv(net, "score.conv", filters, 1, 4, 1, 1, rng));
    return net;
}

} // namespace lumen2he
