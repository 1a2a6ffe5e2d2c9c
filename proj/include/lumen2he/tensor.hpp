// Copyright (c) 2026 lumen2he contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "lumen2he/errors.hpp"

namespace lumen2he {

/// Dense NCHW float array, the interchange format between all network stages.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    Tensor(int n, int c, int h, int w)
        : shape_{n, c, h, w},
          data_(static_cast<std::size_t>(n) * c * h * w, T(0)) {
        if (n < 0 || c < 0 || h < 0 || w < 0)
            throw InvalidInputError("tensor dimensions must be non-negative");
    }

    static Tensor scalar(T v) {
        Tensor t(1, 1, 1, 1);
        t.data_[0] = v;
        return t;
    }

    int n() const { return shape_[0]; }
    int c() const { return shape_[1]; }
    int h() const { return shape_[2]; }
    int w() const { return shape_[3]; }
    const std::array<int, 4>& shape() const { return shape_; }

    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator()(int in, int ic, int ih, int iw) {
        return data_[((static_cast<std::size_t>(in) * shape_[1] + ic) * shape_[2] + ih) * shape_[3] + iw];
    }
    T operator()(int in, int ic, int ih, int iw) const {
        return data_[((static_cast<std::size_t>(in) * shape_[1] + ic) * shape_[2] + ih) * shape_[3] + iw];
    }

    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void set_zero() { fill(T(0)); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    T min_value() const { return *std::min_element(data_.begin(), data_.end()); }
    T max_value() const { return *std::max_element(data_.begin(), data_.end()); }

    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_[0], shape_[1], shape_[2], shape_[3]);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    std::array<int, 4> shape_{0, 0, 0, 0};
    std::vector<T> data_;
};

} // namespace lumen2he
