// Copyright (c) 2026 lumen2he contributors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over 4-D tensors. Every operation
// the generators and discriminators need is implemented here with an exact
// analytic adjoint; the test suite pins each one against central finite
// differences in double precision.
//
// Graphs are tapes of shared_ptr nodes built per forward pass. Parameters
// are long-lived leaf nodes whose gradients accumulate until zeroed by the
// optimizer. Convolutions lower to im2col/col2im plus an Eigen matrix
// product, which keeps the arithmetic single-threaded and deterministic.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lumen2he/errors.hpp"
#include "lumen2he/tensor.hpp"

namespace lumen2he {

template <typename T>
struct Node;

template <typename T>
using Var = std::shared_ptr<Node<T>>;

/// Whether newly created ops record a backward tape. Disable for inference.
inline thread_local bool grad_mode_enabled = true;

struct NoGradGuard {
    NoGradGuard() : prev_(grad_mode_enabled) { grad_mode_enabled = false; }
    ~NoGradGuard() { grad_mode_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad; // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<Var<T>> parents;
    std::function<void(Node<T>&)> backward_op; // scatters this->grad into parents

    void ensure_grad() {
        if (grad.numel() != value.numel())
            grad = Tensor<T>(value.n(), value.c(), value.h(), value.w());
    }
};

template <typename T>
Var<T> make_var(Tensor<T> value, bool requires_grad = false) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return node;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
    return make_var(std::move(value), false);
}

/// Leaf copy of `v`'s value that does not propagate gradients.
template <typename T>
Var<T> detach(const Var<T>& v) {
    return make_var(Tensor<T>(v->value), false);
}

template <typename T>
T scalar_value(const Var<T>& v) {
    if (v->value.numel() != 1) throw InvalidInputError("scalar_value: tensor is not scalar");
    return v->value[0];
}

namespace detail {

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backward_op) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    bool req = false;
    if (grad_mode_enabled)
        for (const auto& p : parents) req = req || p->requires_grad;
    node->requires_grad = req;
    if (req) {
        node->parents = std::move(parents);
        node->backward_op = std::move(backward_op);
    }
    return node;
}

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

/// Gather conv patches: col[(c*kh+ki)*kw+kj][oh*wo+ow] = x[c][oh*s-p+ki][ow*s-p+kj].
template <typename T>
void im2col(const T* img, int channels, int height, int width, int kh, int kw, int stride,
            int pad, int out_h, int out_w, T* col) {
    const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
    for (int c = 0; c < channels; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                T* dst = col + static_cast<std::size_t>((c * kh + ki) * kw + kj) * plane;
                for (int oh = 0; oh < out_h; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= height) {
                        std::fill(dst, dst + out_w, T(0));
                        dst += out_w;
                        continue;
                    }
                    const T* src_row = img + (static_cast<std::size_t>(c) * height + ih) * width;
                    for (int ow = 0; ow < out_w; ++ow, ++dst) {
                        const int iw = ow * stride - pad + kj;
                        *dst = (iw >= 0 && iw < width) ? src_row[iw] : T(0);
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: img[c][oh*s-p+ki][ow*s-p+kj] += col[...][oh*wo+ow].
template <typename T>
void col2im_add(const T* col, int channels, int height, int width, int kh, int kw, int stride,
                int pad, int out_h, int out_w, T* img) {
    const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
    for (int c = 0; c < channels; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const T* src = col + static_cast<std::size_t>((c * kh + ki) * kw + kj) * plane;
                for (int oh = 0; oh < out_h; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= height) {
                        src += out_w;
                        continue;
                    }
                    T* dst_row = img + (static_cast<std::size_t>(c) * height + ih) * width;
                    for (int ow = 0; ow < out_w; ++ow, ++src) {
                        const int iw = ow * stride - pad + kj;
                        if (iw >= 0 && iw < width) dst_row[iw] += *src;
                    }
                }
            }
        }
    }
}

inline int conv_out_dim(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out(x->value.n(), x->value.c(), x->value.h(), x->value.w());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] > T(0) ? x->value[i] : T(0);
    return detail::make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.numel(); ++i)
            if (p->value[i] > T(0)) p->grad[i] += self.grad[i];
    });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
    Tensor<T> out(x->value.n(), x->value.c(), x->value.h(), x->value.w());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const T v = x->value[i];
        out[i] = v > T(0) ? v : slope * v;
    }
    return detail::make_op<T>(std::move(out), {x}, [slope](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.numel(); ++i)
            p->grad[i] += self.grad[i] * (p->value[i] > T(0) ? T(1) : slope);
    });
}

template <typename T>
Var<T> tanh_act(const Var<T>& x) {
    Tensor<T> out(x->value.n(), x->value.c(), x->value.h(), x->value.w());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(x->value[i]);
    return detail::make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            const T y = self.value[i];
            p->grad[i] += self.grad[i] * (T(1) - y * y);
        }
    });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (!a->value.same_shape(b->value)) throw InvalidInputError("add: shape mismatch");
    Tensor<T> out(a->value.n(), a->value.c(), a->value.h(), a->value.w());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
    return detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += self.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Spatial ops
// ---------------------------------------------------------------------------

/// Reflection padding without edge repetition; requires pad < H and pad < W.
template <typename T>
Var<T> reflection_pad2d(const Var<T>& x, int pad) {
    const int n = x->value.n(), c = x->value.c(), h = x->value.h(), w = x->value.w();
    if (pad < 0 || pad >= h || pad >= w)
        throw InvalidInputError("reflection_pad2d: pad must satisfy 0 <= pad < min(H, W)");
    const int oh = h + 2 * pad, ow = w + 2 * pad;
    auto reflect = [](int i, int size) {
        if (i < 0) i = -i;
        if (i >= size) i = 2 * size - 2 - i;
        return i;
    };
    Tensor<T> out(n, c, oh, ow);
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
            for (int y = 0; y < oh; ++y) {
                const int sy = reflect(y - pad, h);
                for (int z = 0; z < ow; ++z) out(in, ic, y, z) = x->value(in, ic, sy, reflect(z - pad, w));
            }
    return detail::make_op<T>(std::move(out), {x}, [pad, reflect](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        const int n = p->value.n(), c = p->value.c(), h = p->value.h(), w = p->value.w();
        const int oh = h + 2 * pad, ow = w + 2 * pad;
        for (int in = 0; in < n; ++in)
            for (int ic = 0; ic < c; ++ic)
                for (int y = 0; y < oh; ++y) {
                    const int sy = reflect(y - pad, h);
                    for (int z = 0; z < ow; ++z)
                        p->grad(in, ic, sy, reflect(z - pad, w)) += self.grad(in, ic, y, z);
                }
    });
}

/// 2-D convolution, zero padding. Weights are [out_ch, in_ch, kh, kw]; bias is
/// a [1, out_ch, 1, 1] tensor (pass an empty Var-free overload is not needed:
/// bias is always present in this architecture).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
    const int n = x->value.n(), cin = x->value.c(), h = x->value.h(), wid = x->value.w();
    const int cout = w->value.n(), kc = w->value.c(), kh = w->value.h(), kw = w->value.w();
    if (cin != kc) throw InvalidInputError("conv2d: input channels do not match weight");
    if (b->value.c() != cout || b->value.numel() != static_cast<std::size_t>(cout))
        throw InvalidInputError("conv2d: bias shape mismatch");
    if (stride < 1) throw InvalidInputError("conv2d: stride must be >= 1");
    const int oh = detail::conv_out_dim(h, kh, stride, pad);
    const int ow = detail::conv_out_dim(wid, kw, stride, pad);
    if (oh < 1 || ow < 1) throw InvalidInputError("conv2d: input smaller than kernel");

    const int K = cin * kh * kw;
    const std::size_t plane = static_cast<std::size_t>(oh) * ow;
    Tensor<T> out(n, cout, oh, ow);
    std::vector<T> col(static_cast<std::size_t>(K) * plane);
    detail::CMapRM<T> W(w->value.data(), cout, K);
    for (int in = 0; in < n; ++in) {
        const T* xp = x->value.data() + static_cast<std::size_t>(in) * cin * h * wid;
        detail::im2col(xp, cin, h, wid, kh, kw, stride, pad, oh, ow, col.data());
        detail::CMapRM<T> C(col.data(), K, static_cast<int>(plane));
        detail::MapRM<T> O(out.data() + static_cast<std::size_t>(in) * cout * plane, cout,
                           static_cast<int>(plane));
        O.noalias() = W * C;
        for (int co = 0; co < cout; ++co) O.row(co).array() += b->value[co];
    }

    auto bw = [stride, pad, kh, kw](Node<T>& self) {
        auto& x = self.parents[0];
        auto& w = self.parents[1];
        auto& b = self.parents[2];
        const int n = x->value.n(), cin = x->value.c(), h = x->value.h(), wid = x->value.w();
        const int cout = w->value.n();
        const int oh = self.value.h(), ow = self.value.w();
        const int K = cin * kh * kw;
        const std::size_t plane = static_cast<std::size_t>(oh) * ow;
        std::vector<T> col(static_cast<std::size_t>(K) * plane);
        detail::CMapRM<T> W(w->value.data(), cout, K);
        if (x->requires_grad) x->ensure_grad();
        if (w->requires_grad) w->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        for (int in = 0; in < n; ++in) {
            detail::CMapRM<T> G(self.grad.data() + static_cast<std::size_t>(in) * cout * plane,
                                cout, static_cast<int>(plane));
            if (w->requires_grad) {
                const T* xp = x->value.data() + static_cast<std::size_t>(in) * cin * h * wid;
                detail::im2col(xp, cin, h, wid, kh, kw, stride, pad, oh, ow, col.data());
                detail::CMapRM<T> C(col.data(), K, static_cast<int>(plane));
                detail::MapRM<T> GW(w->grad.data(), cout, K);
                GW.noalias() += G * C.transpose();
            }
            if (b->requires_grad)
                for (int co = 0; co < cout; ++co) b->grad[co] += G.row(co).sum();
            if (x->requires_grad) {
                detail::MapRM<T> DC(col.data(), K, static_cast<int>(plane));
                DC.noalias() = W.transpose() * G;
                T* gx = x->grad.data() + static_cast<std::size_t>(in) * cin * h * wid;
                detail::col2im_add(col.data(), cin, h, wid, kh, kw, stride, pad, oh, ow, gx);
            }
        }
    };
    return detail::make_op<T>(std::move(out), {x, w, b}, std::move(bw));
}

/// Transposed 2-D convolution. Weights are [in_ch, out_ch, kh, kw]; output
/// size is (in-1)*stride - 2*pad + k + out_pad with out_pad < stride.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad,
                        int out_pad) {
    const int n = x->value.n(), cin = x->value.c(), h = x->value.h(), wid = x->value.w();
    const int wc_in = w->value.n(), cout = w->value.c(), kh = w->value.h(), kw = w->value.w();
    if (cin != wc_in) throw InvalidInputError("conv_transpose2d: input channels do not match weight");
    if (b->value.c() != cout || b->value.numel() != static_cast<std::size_t>(cout))
        throw InvalidInputError("conv_transpose2d: bias shape mismatch");
    if (stride < 1 || out_pad < 0 || out_pad >= stride)
        throw InvalidInputError("conv_transpose2d: require stride >= 1 and 0 <= out_pad < stride");
    const int oh = (h - 1) * stride - 2 * pad + kh + out_pad;
    const int ow = (wid - 1) * stride - 2 * pad + kw + out_pad;
    if (oh < 1 || ow < 1) throw InvalidInputError("conv_transpose2d: empty output");

    const int K = cout * kh * kw;
    const std::size_t in_plane = static_cast<std::size_t>(h) * wid;
    const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
    Tensor<T> out(n, cout, oh, ow);
    std::vector<T> col(static_cast<std::size_t>(K) * in_plane);
    detail::CMapRM<T> W(w->value.data(), cin, K);
    for (int in = 0; in < n; ++in) {
        detail::CMapRM<T> X(x->value.data() + static_cast<std::size_t>(in) * cin * in_plane, cin,
                            static_cast<int>(in_plane));
        detail::MapRM<T> C(col.data(), K, static_cast<int>(in_plane));
        C.noalias() = W.transpose() * X;
        T* op = out.data() + static_cast<std::size_t>(in) * cout * out_plane;
        detail::col2im_add(col.data(), cout, oh, ow, kh, kw, stride, pad, h, wid, op);
        detail::MapRM<T> O(op, cout, static_cast<int>(out_plane));
        for (int co = 0; co < cout; ++co) O.row(co).array() += b->value[co];
    }

    auto bw = [stride, pad, kh, kw](Node<T>& self) {
        auto& x = self.parents[0];
        auto& w = self.parents[1];
        auto& b = self.parents[2];
        const int n = x->value.n(), cin = x->value.c(), h = x->value.h(), wid = x->value.w();
        const int cout = w->value.c();
        const int oh = self.value.h(), ow = self.value.w();
        const int K = cout * kh * kw;
        const std::size_t in_plane = static_cast<std::size_t>(h) * wid;
        const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
        std::vector<T> col(static_cast<std::size_t>(K) * in_plane);
        detail::CMapRM<T> W(w->value.data(), cin, K);
        if (x->requires_grad) x->ensure_grad();
        if (w->requires_grad) w->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        for (int in = 0; in < n; ++in) {
            const T* gp = self.grad.data() + static_cast<std::size_t>(in) * cout * out_plane;
            // dcol gathers the output gradient exactly where forward scattered.
            detail::im2col(gp, cout, oh, ow, kh, kw, stride, pad, h, wid, col.data());
            detail::CMapRM<T> DC(col.data(), K, static_cast<int>(in_plane));
            if (x->requires_grad) {
                detail::MapRM<T> GX(x->grad.data() + static_cast<std::size_t>(in) * cin * in_plane,
                                    cin, static_cast<int>(in_plane));
                GX.noalias() += W * DC;
            }
            if (w->requires_grad) {
                detail::CMapRM<T> X(x->value.data() + static_cast<std::size_t>(in) * cin * in_plane,
                                    cin, static_cast<int>(in_plane));
                detail::MapRM<T> GW(w->grad.data(), cin, K);
                GW.noalias() += X * DC.transpose();
            }
            if (b->requires_grad) {
                detail::CMapRM<T> G(gp, cout, static_cast<int>(out_plane));
                for (int co = 0; co < cout; ++co) b->grad[co] += G.row(co).sum();
            }
        }
    };
    return detail::make_op<T>(std::move(out), {x, w, b}, std::move(bw));
}

/// Instance normalization: per sample, per channel, zero mean and unit
/// variance over the spatial plane. No learnable affine terms, no running
/// statistics.
template <typename T>
Var<T> instance_norm(const Var<T>& x, T eps = T(1e-5)) {
    const int n = x->value.n(), c = x->value.c(), h = x->value.h(), w = x->value.w();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    if (plane == 0) throw InvalidInputError("instance_norm: empty spatial plane");
    Tensor<T> out(n, c, h, w);
    std::vector<T> invstd(static_cast<std::size_t>(n) * c);
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            const T* src = x->value.data() + (static_cast<std::size_t>(in) * c + ic) * plane;
            double mean = 0.0;
            for (std::size_t i = 0; i < plane; ++i) mean += src[i];
            mean /= static_cast<double>(plane);
            double var = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = src[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(plane);
            const T istd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            invstd[static_cast<std::size_t>(in) * c + ic] = istd;
            T* dst = out.data() + (static_cast<std::size_t>(in) * c + ic) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                dst[i] = static_cast<T>((src[i] - mean)) * istd;
        }
    }
    auto bw = [invstd = std::move(invstd)](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        const int n = p->value.n(), c = p->value.c();
        const std::size_t plane = static_cast<std::size_t>(p->value.h()) * p->value.w();
        for (int in = 0; in < n; ++in) {
            for (int ic = 0; ic < c; ++ic) {
                const std::size_t base = (static_cast<std::size_t>(in) * c + ic) * plane;
                const T* g = self.grad.data() + base;
                const T* y = self.value.data() + base;
                T* gx = p->grad.data() + base;
                double mg = 0.0, mgy = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    mg += g[i];
                    mgy += static_cast<double>(g[i]) * y[i];
                }
                mg /= static_cast<double>(plane);
                mgy /= static_cast<double>(plane);
                const T istd = invstd[static_cast<std::size_t>(in) * c + ic];
                for (std::size_t i = 0; i < plane; ++i)
                    gx[i] += istd * static_cast<T>(g[i] - mg - y[i] * mgy);
            }
        }
    };
    return detail::make_op<T>(std::move(out), {x}, std::move(bw));
}

// ---------------------------------------------------------------------------
// Reductions to scalar
// ---------------------------------------------------------------------------

/// Mean of (x - target)^2 over all elements.
template <typename T>
Var<T> mse_to_constant(const Var<T>& x, T target) {
    if (x->value.empty()) throw InvalidInputError("mse_to_constant: empty tensor");
    const std::size_t n = x->value.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(x->value[i]) - target;
        acc += d * d;
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
    return detail::make_op<T>(std::move(out), {x}, [target](Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        const T g0 = self.grad[0];
        const T scale = T(2) / static_cast<T>(p->value.numel());
        for (std::size_t i = 0; i < p->value.numel(); ++i)
            p->grad[i] += g0 * scale * (p->value[i] - target);
    });
}

/// Mean absolute difference between two same-shape tensors.
template <typename T>
Var<T> l1_distance(const Var<T>& a, const Var<T>& b) {
    if (!a->value.same_shape(b->value)) throw InvalidInputError("l1_distance: shape mismatch");
    if (a->value.empty()) throw InvalidInputError("l1_distance: empty tensor");
    const std::size_t n = a->value.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        acc += std::abs(static_cast<double>(a->value[i]) - static_cast<double>(b->value[i]));
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
    return detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        auto& a = self.parents[0];
        auto& b = self.parents[1];
        const T g0 = self.grad[0];
        const T scale = T(1) / static_cast<T>(a->value.numel());
        if (a->requires_grad) a->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        for (std::size_t i = 0; i < a->value.numel(); ++i) {
            const T d = a->value[i] - b->value[i];
            const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
            if (a->requires_grad) a->grad[i] += g0 * scale * s;
            if (b->requires_grad) b->grad[i] -= g0 * scale * s;
        }
    });
}

/// Weighted sum of scalar terms: sum_i coeff_i * term_i.
template <typename T>
Var<T> weighted_sum(const std::vector<std::pair<Var<T>, T>>& terms) {
    if (terms.empty()) throw InvalidInputError("weighted_sum: no terms");
    double acc = 0.0;
    std::vector<Var<T>> parents;
    std::vector<T> coeffs;
    parents.reserve(terms.size());
    coeffs.reserve(terms.size());
    for (const auto& [v, c] : terms) {
        if (v->value.numel() != 1) throw InvalidInputError("weighted_sum: term is not scalar");
        acc += static_cast<double>(c) * v->value[0];
        parents.push_back(v);
        coeffs.push_back(c);
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
    return detail::make_op<T>(std::move(out), std::move(parents),
                              [coeffs = std::move(coeffs)](Node<T>& self) {
                                  for (std::size_t i = 0; i < self.parents.size(); ++i) {
                                      auto& p = self.parents[i];
                                      if (!p->requires_grad) continue;
                                      p->ensure_grad();
                                      p->grad[0] += self.grad[0] * coeffs[i];
                                  }
                              });
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

/// Reverse-mode sweep from `root` (a scalar). Gradients accumulate into every
/// reachable node with requires_grad, including long-lived parameter leaves.
template <typename T>
void backward(const Var<T>& root) {
    if (root->value.numel() != 1) throw InvalidInputError("backward: root must be scalar");
    if (!root->requires_grad) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    struct Frame {
        Node<T>* node;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            Node<T>* p = f.node->parents[f.next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward_op && node->grad.numel() == node->value.numel())
            node->backward_op(*node);
    }
}

} // namespace lumen2he
