#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fedmef/check/oracles.hpp"
#include "fedmef/check/self_check.hpp"
#include "fedmef/errors.hpp"
#include "fedmef/nn/loss.hpp"
#include "fedmef/nn/network.hpp"
#include "fedmef/nn/nsconv.hpp"
#include "fedmef/nn/theorem1.hpp"
#include "fedmef/rng.hpp"

#include <cmath>
#include <numeric>

using namespace fedmef;
using namespace fedmef::nn;

namespace {

Tensor4D<double> random_input(Dims4 d, Rng &rng) {
    Tensor4D<double> x(d);
    for (auto &v : x.data)
        v = rng.normal();
    return x;
}

} // namespace

TEST_CASE("nsconv_standardize examples") {
    SUBCASE("two entries of opposite sign") {
        sparse::Mask m({4, 1, 1}, std::vector<std::uint8_t>{1, 1, 0, 0});
        const auto f = sparse::MaskedTensor64({1.0, -1.0, 0.0, 0.0}, m);
        const auto out = nsconv_standardize(f, 4, 1.0);
        CHECK(out[0] == doctest::Approx(2.0));
        CHECK(out[1] == doctest::Approx(-2.0));
        CHECK(out[2] == 0.0);
    }
    SUBCASE("equal entries hit the guard and standardize to zero") {
        const auto f = sparse::MaskedTensor64({0.5, 0.5, 0.5}, sparse::Mask({3, 1, 1}, true));
        for (double v : nsconv_standardize(f, 3, 1.0))
            CHECK(v == 0.0);
    }
    SUBCASE("fewer than two unpruned entries") {
        sparse::Mask m({3}, std::vector<std::uint8_t>{0, 1, 0});
        CHECK_THROWS_AS(nsconv_standardize(sparse::MaskedTensor64({0.0, 1.0, 0.0}, m), 3, 1.0),
                        DegenerateFilterError);
    }
    SUBCASE("random filter against an independent recomputation") {
        Rng rng(4);
        std::vector<double> w(72);
        for (auto &v : w)
            v = rng.normal();
        auto m = sparse::random_prune({8, 3, 3}, 0.5, 17);
        const auto f = sparse::MaskedTensor64::masked(w, m);
        const auto got = nsconv_standardize(f, 8, 0.7);
        const auto want = check::naive_standardize(f.values(), f.mask().bits(), 8, 0.7);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("1x1 conv is a per-pixel linear map") {
    SparseModel64 model;
    model.input = {2, 2, 2};
    model.layers = {LayerSpec::conv(2, 1, 1, 1, 0, false)};
    model.weighted = {0};
    model.weights = {sparse::MaskedTensor64({2.0, -1.0}, sparse::Mask({1, 2, 1, 1}, true))};
    model.biases = {{}};
    Tensor4D<double> x({1, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, 10, 20, 30, 40});
    const auto y = predict(model, x, kernels::Backend::Serial);
    CHECK(y.data == std::vector<double>{2 - 10, 4 - 20, 6 - 30, 8 - 40});
}

TEST_CASE("conv forward matches a naive loop, with padding and stride") {
    Rng rng(21);
    for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
        auto model = init_model<double>({3, 7, 7}, {LayerSpec::conv(3, 4, 3, stride, pad, false)}, 5);
        random_prune_model(model, 0.5, 6);
        const auto x = random_input({2, 3, 7, 7}, rng);
        const auto y = predict(model, x, kernels::Backend::Serial);
        const auto want = check::naive_conv(x, model.weights[0].values(), 4, 3, stride, pad);
        REQUIRE(y.size() == want.size());
        for (std::size_t i = 0; i < want.size(); ++i)
            CHECK(y.data[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("NSConv output is zero on a constant input") {
    auto model = init_model<double>({4, 6, 6}, {LayerSpec::conv(4, 5, 3, 1, 0, true, 1.0)}, 2);
    random_prune_model(model, 0.5, 3);
    Tensor4D<double> x({1, 4, 6, 6}, 2.5);
    for (double v : predict(model, x, kernels::Backend::Serial).data)
        CHECK(std::abs(v) <= 1e-10);
}

TEST_CASE("single linear layer gradient equals the outer product") {
    SparseModel64 model;
    model.input = {3, 1, 1};
    model.layers = {LayerSpec::flatten(), LayerSpec::linear(3, 2)};
    model.weighted = {1};
    model.weights = {sparse::MaskedTensor64({0.1, 0.2, -0.3, 0.4, 0.0, 0.5}, sparse::Mask({2, 3}, true))};
    model.biases = {{0.1, -0.1}};
    Tensor4D<double> x({1, 3, 1, 1}, std::vector<double>{1.0, -2.0, 0.5});
    ForwardOptions fo;
    fo.backend = kernels::Backend::Serial;
    auto fr = forward(model, x, fo);
    // Squared error against target 0: dL/dy = y.
    const auto g = backward(model, fr.trace, fr.output, {.backend = kernels::Backend::Serial});
    for (std::size_t o = 0; o < 2; ++o) {
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(g.weights[0][o * 3 + i] == doctest::Approx(fr.output.data[o] * x.data[i]));
        CHECK(g.biases[0][o] == doctest::Approx(fr.output.data[o]));
    }
}

TEST_CASE("tiny CNN gradients match central differences") {
    const auto r = check::check_gradients(7);
    INFO(r.detail);
    CHECK(r.pass);
}

TEST_CASE("backward rejects a trace from another model") {
    auto a = init_model<double>({1, 4, 4}, {LayerSpec::conv(1, 2, 3, 1, 0, false), LayerSpec::flatten(),
                                            LayerSpec::linear(8, 2)},
                                1);
    auto b = init_model<double>({1, 4, 4}, {LayerSpec::conv(1, 2, 3, 1, 0, false), LayerSpec::relu(),
                                            LayerSpec::flatten(), LayerSpec::linear(8, 2)},
                                1);
    Rng rng(1);
    const auto x = random_input({1, 1, 4, 4}, rng);
    auto fr = forward(a, x);
    CHECK_THROWS_AS(backward(b, fr.trace, fr.output), TraceMismatchError);
    Tensor4D<double> wrong({2, 2, 1, 1});
    CHECK_THROWS_AS(backward(a, fr.trace, wrong), TraceMismatchError);
}

TEST_CASE("masked step leaves pruned weights at zero") {
    auto model = init_model<float>({1, 5, 5}, {LayerSpec::conv(1, 3, 3, 1, 1, true), LayerSpec::relu(),
                                               LayerSpec::flatten(), LayerSpec::linear(75, 2)},
                                   9);
    random_prune_model(model, 0.8, 10);
    Rng rng(2);
    Tensor4D<float> x({2, 1, 5, 5});
    for (auto &v : x.data)
        v = static_cast<float>(rng.normal());
    auto fr = forward(model, x);
    const int labels[] = {0, 1};
    const auto lg = loss_and_grad(fr.output, labels);
    auto g = backward(model, fr.trace, lg.grad, {.dense_weight_grads = true});
    apply_masked_step(model, g, 0.5f);
    for (const auto &w : model.weights)
        for (std::size_t i = 0; i < w.size(); ++i)
            if (!w.mask()[i])
                CHECK(w[i] == 0.0f);
}

TEST_CASE("cross-entropy examples") {
    Tensor4D<double> u({2, 4, 1, 1}, 0.3);
    const int l[] = {1, 3};
    CHECK(loss_and_grad(u, l).loss == doctest::Approx(std::log(4.0)));
    Tensor4D<double> e({1, 3, 1, 1}, std::vector<double>{-50.0, 50.0, -50.0});
    const int one[] = {1};
    CHECK(loss_and_grad(e, one).loss < 1e-40);
    const int bad[] = {3};
    CHECK_THROWS_AS(loss_and_grad(e, bad), InvalidArgument);

    Rng rng(3);
    Tensor4D<double> z({8, 5, 1, 1});
    for (auto &v : z.data)
        v = 3.0 * rng.normal();
    std::vector<int> lab(8);
    for (auto &v : lab)
        v = static_cast<int>(rng.uniform_index(5));
    const auto f = loss_and_grad(z.cast<float>(), lab);
    const auto d = loss_and_grad(z, lab);
    CHECK(f.loss == doctest::Approx(d.loss).epsilon(1e-6));
    // Reference in long double.
    long double ref = 0;
    for (std::size_t n = 0; n < 8; ++n) {
        long double s = 0;
        for (std::size_t c = 0; c < 5; ++c)
            s += std::exp(static_cast<long double>(z.data[n * 5 + c]));
        ref += std::log(s) - z.data[n * 5 + static_cast<std::size_t>(lab[n])];
    }
    CHECK(d.loss == doctest::Approx(static_cast<double>(ref / 8)).epsilon(1e-13));
}

TEST_CASE("output statistics of one channel") {
    Rng rng(31);
    SUBCASE("constant input gives exactly zero mean") {
        Theorem1Config c;
        c.input = Theorem1Input::Constant;
        const auto r = theorem1_check(c, 200, rng);
        CHECK(std::abs(r.measured_mean) <= 1e-10);
    }
    SUBCASE("standardized filters stay centered, plain positive filters drift") {
        Theorem1Config c;
        const auto ns = theorem1_check(c, 2000, rng);
        CHECK(std::abs(ns.measured_mean) <= 3.0 * ns.mean_stderr);
        c.nsconv = false;
        c.filter_mean = 0.5;
        const auto plain = theorem1_check(c, 2000, rng);
        CHECK(plain.measured_mean > 3.0 * plain.mean_stderr);
        CHECK(plain.measured_mean == doctest::Approx(plain.predicted_plain_mean).epsilon(0.1));
    }
    SUBCASE("few trials are flagged") {
        Theorem1Config c;
        CHECK(theorem1_check(c, 10, rng).insufficient_samples);
        CHECK_THROWS_AS(theorem1_check(c, 0, rng), InvalidArgument);
    }
}
