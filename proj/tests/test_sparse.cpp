#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fedmef/errors.hpp"
#include "fedmef/rng.hpp"
#include "fedmef/sparse/codec.hpp"
#include "fedmef/sparse/mask.hpp"
#include "fedmef/sparse/masked_tensor.hpp"

#include <cstring>

using namespace fedmef;
using namespace fedmef::sparse;

namespace {

MaskedTensor random_tensor(const Shape &shape, double density, Rng &rng) {
    const std::size_t n = element_count(shape);
    Mask m(shape, false);
    std::vector<float> v(n, 0.0f);
    for (std::size_t i = 0; i < n; ++i)
        if (rng.uniform() < density) {
            m.set(i, true);
            float x;
            do {
                x = static_cast<float>(rng.normal());
            } while (x == 0.0f);
            v[i] = x;
        }
    return MaskedTensor(std::move(v), std::move(m));
}

bool bit_equal(const MaskedTensor &a, const MaskedTensor &b) {
    if (a.shape() != b.shape() || !(a.mask() == b.mask()))
        return false;
    return std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(float)) == 0;
}

} // namespace

TEST_CASE("random_prune: counts, bounds and determinism") {
    CHECK(random_prune({10}, 0.0, 1).count_kept() == 10);
    CHECK(random_prune({10}, 0.9, 1).count_kept() == 1);
    const auto a = random_prune({4, 4}, 0.5, 42);
    const auto b = random_prune({4, 4}, 0.5, 42);
    CHECK(a.count_pruned() == 8);
    CHECK(a == b);
    CHECK_FALSE(a == random_prune({4, 4}, 0.5, 43));
    CHECK_THROWS_AS(random_prune({10}, 1.0, 1), InvalidArgument);
    CHECK_THROWS_AS(random_prune({10}, -0.1, 1), InvalidArgument);
}

TEST_CASE("magnitude_prune keeps the largest magnitudes, lower index on ties") {
    const auto m = magnitude_prune({4}, {0.1f, -0.9f, 0.05f, 0.7f}, 0.5);
    CHECK(m.kept_indices() == std::vector<std::size_t>{1, 3});
    const auto t = magnitude_prune({4}, {1.0f, 1.0f, 1.0f, 1.0f}, 0.75);
    CHECK(t.kept_indices() == std::vector<std::size_t>{0});
}

TEST_CASE("masked tensor rejects values at pruned positions") {
    Mask m({3}, std::vector<std::uint8_t>{1, 0, 1});
    CHECK_THROWS_AS(MaskedTensor({1.0f, 2.0f, 3.0f}, m), InvalidArgument);
    const auto t = MaskedTensor::masked({1.0f, 2.0f, 3.0f}, m);
    CHECK(t[1] == 0.0f);
    auto u = t;
    u.set(1, 5.0f);
    CHECK(u[1] == 0.0f);
}

TEST_CASE("scheme bands") {
    CHECK(select_scheme(1.0) == Scheme::Dense);
    CHECK(select_scheme(0.95) == Scheme::Dense);
    CHECK(select_scheme(0.9) == Scheme::Dense);
    CHECK(select_scheme(0.89) == Scheme::Bitmap);
    CHECK(select_scheme(0.3) == Scheme::Bitmap);
    CHECK(select_scheme(0.29) == Scheme::COO);
    CHECK(select_scheme(0.2) == Scheme::COO);
    CHECK(select_scheme(0.1) == Scheme::COO);
    CHECK(select_scheme(0.05) == Scheme::CSR);
    // Wide matrix: CSR pays rows * log2(nnz), CSC pays cols * log2(nnz).
    CHECK(select_scheme(0.05, 2, 100, 10) == Scheme::CSR);
    CHECK(select_scheme(0.05, 100, 2, 10) == Scheme::CSC);
    CHECK(select_scheme(0.05, 20, 20, 20) == Scheme::CSR);
}

TEST_CASE("storage_bits closed forms") {
    CHECK(storage_bits(1000, 200, 32, Scheme::COO) == 8400);
    CHECK(storage_bits(64, 64, 32, Scheme::Dense) == 2048);
    CHECK(storage_bits(1024, 50, 32, Scheme::CSR, 32, 32) == 2042);
    CHECK(storage_bits(100, 40, 32, Scheme::Bitmap) == 100 + 40 * 32);
    // CSC swaps the roles: 10x40, nnz 20 -> 20*ceil(log2 10) + 40*ceil(log2 20) + 20*32.
    CHECK(storage_bits(400, 20, 32, Scheme::CSC, 10, 40) == 20 * 4 + 40 * 5 + 640);
    CHECK(ceil_log2(0) == 0);
    CHECK(ceil_log2(1) == 0);
    CHECK(ceil_log2(2) == 1);
    CHECK(ceil_log2(1025) == 11);
    CHECK_THROWS_AS(storage_bits(10, 11, 32, Scheme::COO), InvalidArgument);
    CHECK_THROWS_AS(storage_bits(10, 5, 32, Scheme::CSR, 3, 3), InvalidArgument);
}

TEST_CASE("as_matrix flattens leading dims") {
    const auto v = as_matrix({2, 3, 4, 5});
    CHECK(v.rows == 24);
    CHECK(v.cols == 5);
    CHECK(as_matrix({7}).rows == 1);
}

TEST_CASE("codec examples") {
    SUBCASE("all-zero tensor") {
        const auto t = MaskedTensor::masked(std::vector<float>(16, 0.0f), Mask({4, 4}, false));
        const auto e = encode(t);
        CHECK(e.scheme == Scheme::CSR);
        CHECK(e.nnz == 0);
        CHECK(bit_equal(decode(e), t));
    }
    SUBCASE("fully dense") {
        Rng rng(3);
        const auto t = random_tensor({5, 5}, 1.1, rng);
        const auto e = encode(t);
        CHECK(e.scheme == Scheme::Dense);
        CHECK(bit_equal(decode(e), t));
    }
    SUBCASE("quarter density uses COO") {
        Mask m({100}, false);
        std::vector<float> v(100, 0.0f);
        for (std::size_t i = 0; i < 100; i += 4) {
            m.set(i, true);
            v[i] = 0.5f + static_cast<float>(i);
        }
        const MaskedTensor t(v, m);
        const auto e = encode(t);
        CHECK(e.scheme == Scheme::COO);
        CHECK(e.total_bits == 25 * (7 + 32));
        CHECK(bit_equal(decode(e), t));
    }
}

TEST_CASE("codec round trip under every scheme, with serialization") {
    Rng rng(11);
    const Scheme schemes[] = {Scheme::Dense, Scheme::Bitmap, Scheme::COO, Scheme::CSR, Scheme::CSC};
    for (int trial = 0; trial < 200; ++trial) {
        const Shape shape{1 + rng.uniform_index(6), 1 + rng.uniform_index(7), 1 + rng.uniform_index(5)};
        const auto t = random_tensor(shape, rng.uniform(), rng);
        for (auto s : schemes) {
            const auto e = encode(t, 32, s);
            const auto mv = as_matrix(shape);
            CHECK(e.total_bits == storage_bits(t.size(), t.mask().count_kept(), 32, s, mv.rows, mv.cols));
            const auto bytes = serialize(e);
            std::size_t off = 0;
            const auto back = deserialize(bytes, off);
            CHECK(off == bytes.size());
            CHECK(back.scheme == s);
            REQUIRE(bit_equal(decode(back), t));
        }
    }
}

TEST_CASE("decode reports malformed payloads") {
    Rng rng(5);
    const auto t = random_tensor({8, 8}, 0.2, rng);
    auto e = encode(t, 32, Scheme::COO);
    e.payload.resize(e.payload.size() / 2);
    try {
        (void)decode(e);
        FAIL("expected DecodeError");
    } catch (const DecodeError &err) {
        CHECK(err.scheme() == "COO");
    }
    std::vector<std::uint8_t> junk{9, 0, 0};
    std::size_t off = 0;
    CHECK_THROWS_AS(deserialize(junk, off), DecodeError);
}

TEST_CASE("checkpoint round trip") {
    Rng rng(8);
    std::vector<MaskedTensor> ts{random_tensor({3, 3}, 0.5, rng), random_tensor({40}, 0.05, rng),
                                 random_tensor({2, 2, 2}, 1.0, rng)};
    const auto back = read_checkpoint(write_checkpoint(ts));
    REQUIRE(back.size() == ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i)
        CHECK(bit_equal(back[i], ts[i]));
}

TEST_CASE("64-bit values round trip at b = 64") {
    Rng rng(9);
    const auto t = random_tensor({6, 6}, 0.4, rng);
    const auto e = encode(t, 64);
    CHECK(e.value_bits == 64);
    CHECK(bit_equal(decode(e), t));
}
