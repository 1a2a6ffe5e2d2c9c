// Copyright (c) 2026 lumen2he contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "lumen2he/autodiff.hpp"

namespace lumen2he {

/// Adaptive-moment gradient descent with bias correction. One instance owns
/// one parameter group; both generators share a group, each discriminator
/// has its own.
template <typename T>
class Adam {
public:
    struct Moments {
        Tensor<T> m, v;
    };

    Adam() = default;
    Adam(std::vector<Var<T>> params, double beta1, double beta2, double eps = 1e-8)
        : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
        state_.reserve(params_.size());
        for (const auto& p : params_) {
            Moments s;
            s.m = Tensor<T>(p->value.n(), p->value.c(), p->value.h(), p->value.w());
            s.v = Tensor<T>(p->value.n(), p->value.c(), p->value.h(), p->value.w());
            state_.push_back(std::move(s));
        }
    }

    /// One update over the group. Parameters whose grad buffer is unallocated
    /// are treated as having zero gradient.
    void step(double lr) {
        ++step_count_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            auto& p = params_[pi];
            auto& s = state_[pi];
            const bool has_grad = p->grad.numel() == p->value.numel();
            for (std::size_t i = 0; i < p->value.numel(); ++i) {
                const double g = has_grad ? static_cast<double>(p->grad[i]) : 0.0;
                const double m = beta1_ * s.m[i] + (1.0 - beta1_) * g;
                const double v = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
                s.m[i] = static_cast<T>(m);
                s.v[i] = static_cast<T>(v);
                const double mhat = m / bc1;
                const double vhat = v / bc2;
                p->value[i] = static_cast<T>(p->value[i] - lr * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    long long step_count() const { return step_count_; }
    void set_step_count(long long t) { step_count_ = t; }
    std::vector<Moments>& state() { return state_; }
    const std::vector<Moments>& state() const { return state_; }
    const std::vector<Var<T>>& params() const { return params_; }

private:
    std::vector<Var<T>> params_;
    std::vector<Moments> state_;
    double beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
    long long step_count_ = 0;
};

} // namespace lumen2he
