// Copyright (c) 2026 lumen2he contributors
// SPDX-License-Identifier: Apache-2.0
//
// The autodiff core is pinned two ways: op values against naive
// straight-loop re-implementations, and every adjoint against central
// finite differences in double precision.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lumen2he/autodiff.hpp"
#include "testing_util.hpp"

using namespace lumen2he;
using l2h_test::gradcheck;
using l2h_test::random_tensor;

namespace {

// Independent straight-loop convolution used as a value oracle.
Tensor<double> naive_conv2d(const Tensor<double>& x, const Tensor<double>& w,
                            const Tensor<double>& b, int stride, int pad) {
    const int n = x.n(), cin = x.c(), h = x.h(), wid = x.w();
    const int cout = w.n(), kh = w.h(), kw = w.w();
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wid + 2 * pad - kw) / stride + 1;
    Tensor<double> out(n, cout, oh, ow);
    for (int in = 0; in < n; ++in)
        for (int co = 0; co < cout; ++co)
            for (int y = 0; y < oh; ++y)
                for (int z = 0; z < ow; ++z) {
                    double acc = b[co];
                    for (int ci = 0; ci < cin; ++ci)
                        for (int ki = 0; ki < kh; ++ki)
                            for (int kj = 0; kj < kw; ++kj) {
                                const int iy = y * stride - pad + ki;
                                const int iz = z * stride - pad + kj;
                                if (iy >= 0 && iy < h && iz >= 0 && iz < wid)
                                    acc += x(in, ci, iy, iz) * w(co, ci, ki, kj);
                            }
                    out(in, co, y, z) = acc;
                }
    return out;
}

// Independent straight-loop transposed convolution oracle.
Tensor<double> naive_conv_transpose2d(const Tensor<double>& x, const Tensor<double>& w,
                                      const Tensor<double>& b, int stride, int pad, int out_pad) {
    const int n = x.n(), cin = x.c(), h = x.h(), wid = x.w();
    const int cout = w.c(), kh = w.h(), kw = w.w();
    const int oh = (h - 1) * stride - 2 * pad + kh + out_pad;
    const int ow = (wid - 1) * stride - 2 * pad + kw + out_pad;
    Tensor<double> out(n, cout, oh, ow);
    for (int in = 0; in < n; ++in) {
        for (int co = 0; co < cout; ++co)
            for (int y = 0; y < oh; ++y)
                for (int z = 0; z < ow; ++z) out(in, co, y, z) = b[co];
        for (int ci = 0; ci < cin; ++ci)
            for (int y = 0; y < h; ++y)
                for (int z = 0; z < wid; ++z)
                    for (int co = 0; co < cout; ++co)
                        for (int ki = 0; ki < kh; ++ki)
                            for (int kj = 0; kj < kw; ++kj) {
                                const int oy = y * stride - pad + ki;
                                const int oz = z * stride - pad + kj;
                                if (oy >= 0 && oy < oh && oz >= 0 && oz < ow)
                                    out(in, co, oy, oz) += x(in, ci, y, z) * w(ci, co, ki, kj);
                            }
    }
    return out;
}

} // namespace

TEST_CASE("conv2d matches the straight-loop oracle", "[autodiff]") {
    Rng rng(11);
    auto x = random_tensor<double>(2, 3, 7, 6, rng);
    auto w = random_tensor<double>(4, 3, 3, 3, rng);
    auto b = random_tensor<double>(1, 4, 1, 1, rng);
    for (auto [stride, pad] : {std::pair{1, 0}, std::pair{1, 1}, std::pair{2, 1}}) {
        auto got = conv2d(make_var(Tensor<double>(x)), make_var(Tensor<double>(w)),
                          make_var(Tensor<double>(b)), stride, pad);
        auto want = naive_conv2d(x, w, b, stride, pad);
        REQUIRE(got->value.same_shape(want));
        for (std::size_t i = 0; i < want.numel(); ++i)
            REQUIRE_THAT(got->value[i], Catch::Matchers::WithinAbs(want[i], 1e-12));
    }
}

TEST_CASE("conv_transpose2d matches the straight-loop oracle", "[autodiff]") {
    Rng rng(12);
    auto x = random_tensor<double>(2, 3, 5, 4, rng);
    auto w = random_tensor<double>(3, 4, 3, 3, rng);
    auto b = random_tensor<double>(1, 4, 1, 1, rng);
    auto got = conv_transpose2d(make_var(Tensor<double>(x)), make_var(Tensor<double>(w)),
                                make_var(Tensor<double>(b)), 2, 1, 1);
    auto want = naive_conv_transpose2d(x, w, b, 2, 1, 1);
    REQUIRE(got->value.same_shape(want));
    REQUIRE(got->value.h() == 2 * x.h());
    for (std::size_t i = 0; i < want.numel(); ++i)
        REQUIRE_THAT(got->value[i], Catch::Matchers::WithinAbs(want[i], 1e-12));
}

TEST_CASE("conv2d gradients match finite differences", "[autodiff][gradcheck]") {
    Rng rng(21);
    auto x = make_var(random_tensor<double>(2, 3, 6, 5, rng), true);
    auto w = make_var(random_tensor<double>(4, 3, 3, 3, rng), true);
    auto b = make_var(random_tensor<double>(1, 4, 1, 1, rng), true);
    auto loss = [&] { return mse_to_constant(conv2d(x, w, b, 2, 1), 0.25); };
    auto report = gradcheck<double>({x, w, b}, loss, rng, 120);
    REQUIRE(report.max_rel_err < 1e-6);
}

TEST_CASE("conv_transpose2d gradients match finite differences", "[autodiff][gradcheck]") {
    Rng rng(22);
    auto x = make_var(random_tensor<double>(2, 4, 4, 4, rng), true);
    auto w = make_var(random_tensor<double>(4, 3, 3, 3, rng), true);
    auto b = make_var(random_tensor<double>(1, 3, 1, 1, rng), true);
    auto loss = [&] { return mse_to_constant(conv_transpose2d(x, w, b, 2, 1, 1), -0.1); };
    auto report = gradcheck<double>({x, w, b}, loss, rng, 120);
    REQUIRE(report.max_rel_err < 1e-6);
}

TEST_CASE("instance_norm normalizes and its gradient is exact", "[autodiff][gradcheck]") {
    Rng rng(23);
    auto x = make_var(random_tensor<double>(2, 3, 6, 6, rng, -2.0, 3.0), true);
    auto y = instance_norm(x);
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c) {
            double mean = 0, var = 0;
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) mean += y->value(n, c, i, j);
            mean /= 36;
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) {
                    const double d = y->value(n, c, i, j) - mean;
                    var += d * d;
                }
            var /= 36;
            REQUIRE(std::abs(mean) < 1e-12);
            REQUIRE(std::abs(var - 1.0) < 1e-3); // eps shrinks variance slightly
        }
    auto loss = [&] { return mse_to_constant(instance_norm(x), 0.3); };
    auto report = gradcheck<double>({x}, loss, rng, 100);
    REQUIRE(report.max_rel_err < 1e-6);
}

TEST_CASE("instance_norm of a constant channel is (near) zero", "[autodiff]") {
    Tensor<double> t(1, 2, 4, 4);
    t.fill(0.7);
    auto y = instance_norm(make_var(std::move(t)));
    for (std::size_t i = 0; i < y->value.numel(); ++i)
        REQUIRE_THAT(y->value[i], Catch::Matchers::WithinAbs(0.0, 1e-12));

    // the exactly-zero input case underpins the residual-block identity
    Tensor<double> z(1, 2, 4, 4);
    auto yz = instance_norm(make_var(std::move(z)));
    for (std::size_t i = 0; i < yz->value.numel(); ++i) REQUIRE(yz->value[i] == 0.0);
}

TEST_CASE("reflection_pad2d maps indices without edge repetition", "[autodiff][gradcheck]") {
    Tensor<double> t(1, 1, 1, 4);
    t(0, 0, 0, 0) = 0;
    t(0, 0, 0, 1) = 1;
    t(0, 0, 0, 2) = 2;
    t(0, 0, 0, 3) = 3;
    // pad 0 on rows is not allowed (pad < H); use a 4x4 with distinct first row instead
    Tensor<double> q(1, 1, 4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) q(0, 0, i, j) = i * 4 + j;
    auto padded = reflection_pad2d(make_var(std::move(q)), 2);
    REQUIRE(padded->value.h() == 8);
    // column pattern for row 0 of source: [2 1 0 1 2 3 2 1] -> offset by row reflect
    // row index for output row 0 is reflect(-2) = 2
    REQUIRE(padded->value(0, 0, 0, 2) == 2 * 4 + 0);
    REQUIRE(padded->value(0, 0, 0, 0) == 2 * 4 + 2);
    REQUIRE(padded->value(0, 0, 7, 7) == 1 * 4 + 1);

    Rng rng(24);
    auto x = make_var(random_tensor<double>(1, 2, 5, 5, rng), true);
    auto loss = [&] { return mse_to_constant(reflection_pad2d(x, 3), 0.0); };
    auto report = gradcheck<double>({x}, loss, rng, 80);
    REQUIRE(report.max_rel_err < 1e-6);

    REQUIRE_THROWS_AS(reflection_pad2d(x, 5), InvalidInputError);
}

TEST_CASE("elementwise activations and add: gradients", "[autodiff][gradcheck]") {
    Rng rng(25);
    // keep magnitudes above the finite-difference step so kinks are not crossed
    auto gen_away_from_zero = [&](int n, int c, int h, int w) {
        Tensor<double> t(n, c, h, w);
        for (std::size_t i = 0; i < t.numel(); ++i) {
            double v = rng.uniform(0.01, 1.0);
            t[i] = rng.uniform() < 0.5 ? -v : v;
        }
        return t;
    };
    auto x = make_var(gen_away_from_zero(1, 2, 4, 4), true);
    auto y = make_var(gen_away_from_zero(1, 2, 4, 4), true);

    auto loss_relu = [&] { return mse_to_constant(relu(x), 0.2); };
    REQUIRE(gradcheck<double>({x}, loss_relu, rng, 60).max_rel_err < 1e-6);

    auto loss_leaky = [&] { return mse_to_constant(leaky_relu(x, 0.2), 0.2); };
    REQUIRE(gradcheck<double>({x}, loss_leaky, rng, 60).max_rel_err < 1e-6);

    auto loss_tanh = [&] { return mse_to_constant(tanh_act(x), -0.4); };
    REQUIRE(gradcheck<double>({x}, loss_tanh, rng, 60).max_rel_err < 1e-6);

    auto loss_add = [&] { return mse_to_constant(add(x, y), 0.1); };
    REQUIRE(gradcheck<double>({x, y}, loss_add, rng, 60).max_rel_err < 1e-6);
}

TEST_CASE("l1_distance gradient and symmetry", "[autodiff][gradcheck]") {
    Rng rng(26);
    auto x = make_var(random_tensor<double>(1, 3, 4, 4, rng, 0.5, 1.5), true);
    auto y = make_var(random_tensor<double>(1, 3, 4, 4, rng, -1.5, -0.5), true);
    REQUIRE(scalar_value(l1_distance(x, y)) == scalar_value(l1_distance(y, x)));
    auto loss = [&] { return l1_distance(x, y); };
    REQUIRE(gradcheck<double>({x, y}, loss, rng, 60).max_rel_err < 1e-6);
}

TEST_CASE("a value used on two paths accumulates both gradients", "[autodiff]") {
    Rng rng(27);
    auto x = make_var(random_tensor<double>(1, 1, 3, 3, rng, 0.2, 0.9), true);
    auto loss = [&] {
        return weighted_sum<double>(
            {{mse_to_constant(tanh_act(x), 0.0), 1.0}, {mse_to_constant(relu(x), 0.5), 2.0}});
    };
    REQUIRE(gradcheck<double>({x}, loss, rng, 40).max_rel_err < 1e-6);
}

TEST_CASE("detach stops gradients; frozen parameters receive none", "[autodiff]") {
    Rng rng(28);
    auto x = make_var(random_tensor<double>(1, 1, 2, 2, rng), true);
    auto d = detach(x);
    REQUIRE_FALSE(d->requires_grad);

    auto w = make_var(random_tensor<double>(2, 1, 3, 3, rng), true);
    auto b = make_var(Tensor<double>(1, 2, 1, 1), true);
    auto xin = make_var(random_tensor<double>(1, 1, 5, 5, rng), true);
    w->requires_grad = false; // frozen
    xin->ensure_grad();
    xin->grad.set_zero();
    auto loss = mse_to_constant(conv2d(xin, w, b, 1, 1), 0.0);
    backward(loss);
    REQUIRE(w->grad.numel() == 0); // never allocated
    bool any = false;
    for (std::size_t i = 0; i < xin->grad.numel(); ++i) any = any || xin->grad[i] != 0.0;
    REQUIRE(any);
}

TEST_CASE("NoGradGuard suppresses tape construction", "[autodiff]") {
    Rng rng(29);
    auto x = make_var(random_tensor<double>(1, 1, 4, 4, rng), true);
    NoGradGuard ng;
    auto y = relu(x);
    REQUIRE_FALSE(y->requires_grad);
    REQUIRE(y->parents.empty());
}

TEST_CASE("weighted_sum arithmetic and shape errors", "[autodiff]") {
    auto a = make_var(Tensor<double>::scalar(0.5));
    auto b = make_var(Tensor<double>::scalar(0.2));
    REQUIRE(scalar_value(weighted_sum<double>({{a, 2.0}, {b, 10.0}})) ==
            Catch::Approx(3.0).epsilon(1e-12));

    auto x = make_var(Tensor<double>(1, 1, 2, 2));
    auto y = make_var(Tensor<double>(1, 1, 3, 2));
    REQUIRE_THROWS_AS(add(x, y), InvalidInputError);
    REQUIRE_THROWS_AS(l1_distance(x, y), InvalidInputError);
    Tensor<double> empty;
    REQUIRE_THROWS_AS(mse_to_constant(make_var(std::move(empty)), 0.0), InvalidInputError);
}
