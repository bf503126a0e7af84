#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fedmef/check/oracles.hpp"
#include "fedmef/check/self_check.hpp"
#include "fedmef/errors.hpp"
#include "fedmef/nn/loss.hpp"
#include "fedmef/nn/network.hpp"
#include "fedmef/rng.hpp"
#include "fedmef/sap/activation_cache.hpp"
#include "fedmef/sparse/codec.hpp"

using namespace fedmef;
using namespace fedmef::sap;

TEST_CASE("kept_count rounds up") {
    CHECK(kept_count(10, 0.9) == 1);
    CHECK(kept_count(10, 0.85) == 2);
    CHECK(kept_count(4, 0.5) == 2);
    CHECK(kept_count(0, 0.5) == 0);
    CHECK(kept_count(7, 0.0) == 7);
    CHECK(kept_count(10000, 0.9) == 1000);
}

TEST_CASE("prune_activation examples") {
    nn::Tensor4D<double> a({1, 1, 1, 4}, std::vector<double>{3, -5, 0, 1});
    const auto c = prune_activation(a, 0.5);
    CHECK(c.indices == std::vector<std::uint32_t>{0, 1});
    CHECK(c.values == std::vector<double>{3, -5});
    CHECK(densify(c).data == std::vector<double>{3, -5, 0, 0});
    CHECK(c.sparsity() == 0.5);

    nn::Tensor4D<double> eq({1, 1, 2, 2}, 1.5);
    CHECK(prune_activation(eq, 0.75).indices == std::vector<std::uint32_t>{0});

    const auto all = prune_activation(a, 0.0);
    CHECK(densify(all).data == a.data);

    nn::Tensor4D<double> tiny({1, 1, 1, 1}, 2.0);
    CHECK(prune_activation(tiny, 0.9).kept() == 1);
    CHECK_THROWS_AS(prune_activation(a, 1.0), InvalidArgument);
}

TEST_CASE("corrupt caches are rejected") {
    ActivationCache<float> c;
    c.dims = {1, 1, 1, 4};
    c.indices = {2, 1};
    c.values = {1.0f, 2.0f};
    CHECK_THROWS_AS(validate(c), CorruptCacheError);
    c.indices = {1, 9};
    CHECK_THROWS_AS(densify(c), CorruptCacheError);
    c.indices = {1};
    CHECK_THROWS_AS(validate(c), CorruptCacheError);
    ActivationCache<float> empty;
    empty.dims = {1, 1, 1, 3};
    CHECK(densify(empty).data == std::vector<float>{0, 0, 0});
}

TEST_CASE("cache storage bits") {
    nn::Tensor4D<float> a({1, 1, 100, 100});
    Rng rng(1);
    for (auto &v : a.data)
        v = static_cast<float>(rng.normal());
    const auto c = prune_activation(a, 0.9);
    REQUIRE(c.kept() == 1000);
    // 10^4 elements at density 0.1: the COO band, plus 10^4 sign bits.
    CHECK(cache_storage_bits(c, 32, true) == 1000 * (14 + 32) + 10000);
    CHECK(dense_cache_bits(10000, 32, true) == 330000);
    CHECK(dense_cache_bits(10000, 32, false) == 320000);
    CHECK(3 * cache_storage_bits(c, 32, true) <= dense_cache_bits(10000, 32, false));

    const auto full = prune_activation(a, 0.0);
    CHECK(cache_storage_bits(full, 32, true) == 10000 * 32 + 10000);
    ActivationCache<float> none;
    CHECK(cache_storage_bits(none, 32, true) == 0);
}

TEST_CASE("weight gradients under activation pruning equal the zeroed dense reference") {
    auto model = check::gradient_check_model(3);
    Rng rng(4);
    nn::Tensor4D<double> x({3, model.input.c, model.input.h, model.input.w});
    for (auto &v : x.data)
        v = rng.normal();
    const int labels[] = {0, 2, 1};
    for (double s : {0.5, 0.8, 0.9}) {
        nn::ForwardOptions fo;
        fo.sap.target_sparsity = s;
        auto fr = nn::forward(model, x, fo);
        const auto lg = nn::loss_and_grad(fr.output, labels);
        const auto got = nn::backward(model, fr.trace, lg.grad);
        const auto want = check::zeroed_cache_reference(model, x, labels, s);
        for (std::size_t k = 0; k < got.weights.size(); ++k)
            for (std::size_t i = 0; i < got.weights[k].size(); ++i)
                CHECK(std::abs(got.weights[k][i] - want.weights[k][i]) <= 1e-12);
    }
}

TEST_CASE("trace accounting matches cache_storage_bits") {
    auto model = check::gradient_check_model(5);
    Rng rng(6);
    nn::Tensor4D<double> x({4, model.input.c, model.input.h, model.input.w});
    for (auto &v : x.data)
        v = rng.normal();
    nn::ForwardOptions fo;
    fo.sap.target_sparsity = 0.9;
    const auto fr = nn::forward(model, x, fo);
    std::uint64_t caches = 0;
    for (const auto &lt : fr.trace.layers)
        if (const auto *c = std::get_if<ActivationCache<double>>(&lt.input))
            caches += cache_storage_bits(*c, 32, false);
    CHECK(fr.trace.bits.cached == caches + fr.trace.bits.sign);
    CHECK(fr.trace.bits.cached < fr.trace.bits.dense);
}

TEST_CASE("top-k selection matches a full sort, including ties") {
    const auto r = check::check_sap(300, 9);
    INFO(r.detail);
    CHECK(r.pass);
}
