#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fedmef/config/experiment.hpp"
#include "fedmef/data/dataset.hpp"
#include "fedmef/errors.hpp"
#include "fedmef/fl/partition.hpp"
#include "fedmef/fl/protocol.hpp"
#include "fedmef/fl/simulator.hpp"
#include "fedmef/fl/variant.hpp"
#include "fedmef/nn/loss.hpp"
#include "fedmef/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace fedmef;
using namespace fedmef::fl;

namespace {

nn::SparseModel64 layer_model(std::vector<double> w, std::vector<std::uint8_t> keep) {
    nn::SparseModel64 m;
    const std::size_t n = w.size();
    m.input = {n, 1, 1};
    m.layers = {nn::LayerSpec::flatten(), nn::LayerSpec::linear(n, 1)};
    m.weighted = {1};
    m.weights = {sparse::MaskedTensor64(std::move(w), sparse::Mask({1, n}, std::move(keep)))};
    m.biases = {{0.0}};
    return m;
}

nn::GradientSet<double> grads_of(std::vector<double> g) {
    nn::GradientSet<double> gs;
    gs.weights = {std::move(g)};
    gs.biases = {{0.0}};
    return gs;
}

config::ExperimentConfig tiny_config() {
    config::ExperimentConfig c;
    c.input = {1, 8, 8};
    c.classes = 3;
    c.train_per_class = 12;
    c.test_per_class = 6;
    c.noise = 0.2;
    c.clients = 4;
    c.rounds = 6;
    c.local_epochs = 1;
    c.adjust_period = 2;
    c.adjust_stop = 4;
    c.batch_size = 4;
    c.lr0 = 0.05;
    c.lr_decay = 1.0;
    return c;
}

} // namespace

TEST_CASE("variant names and traits") {
    for (auto v : all_variants())
        CHECK(parse_variant(variant_name(v)) == v);
    CHECK(parse_variant("NOBAE") == Variant::FedMefNoBaE);
    CHECK(parse_variant("dense") == Variant::FedAvgDense);
    CHECK_FALSE(parse_variant("nope").has_value());
    CHECK(traits_of(Variant::FedMef).extrusion);
    CHECK_FALSE(traits_of(Variant::FedMefNoBaE).extrusion);
    CHECK_FALSE(traits_of(Variant::FedMefNoSAP).activation_pruning);
    CHECK_FALSE(traits_of(Variant::StaticPrune).adjusts_structure);
    CHECK(traits_of(Variant::FedAvgDense).initial_mask == InitialMask::Dense);
}

TEST_CASE("Dirichlet partition") {
    std::vector<int> labels(600);
    for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = static_cast<int>(i % 3);

    SUBCASE("one client gets everything") {
        Rng rng(1);
        const auto p = partition_dirichlet(labels, 3, 1, 0.5, 1, rng);
        REQUIRE(p.size() == 1);
        CHECK(p[0].size() == 600);
    }
    SUBCASE("shards are disjoint, cover the data and are reproducible") {
        Rng a(5), b(5);
        const auto p = partition_dirichlet(labels, 3, 8, 0.5, 1, a);
        CHECK(p == partition_dirichlet(labels, 3, 8, 0.5, 1, b));
        std::vector<std::size_t> all;
        for (const auto &s : p) {
            CHECK(!s.empty());
            CHECK(std::is_sorted(s.begin(), s.end()));
            all.insert(all.end(), s.begin(), s.end());
        }
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> want(600);
        std::iota(want.begin(), want.end(), 0);
        CHECK(all == want);
    }
    SUBCASE("very large alpha is close to uniform") {
        Rng rng(2);
        const auto p = partition_dirichlet(labels, 3, 4, 1e6, 1, rng);
        for (const auto &s : p) {
            std::array<double, 3> counts{};
            for (auto i : s)
                counts[static_cast<std::size_t>(labels[i])] += 1;
            for (double c : counts)
                CHECK(std::abs(c / static_cast<double>(s.size()) - 1.0 / 3.0) < 0.05);
        }
    }
    SUBCASE("errors") {
        Rng rng(3);
        CHECK_THROWS_AS(partition_dirichlet(labels, 3, 601, 0.5, 1, rng), InvalidArgument);
        CHECK_THROWS_AS(partition_dirichlet(labels, 3, 4, 0.0, 1, rng), InvalidArgument);
    }
}

TEST_CASE("aggregation") {
    const auto a = layer_model({0.0, 1.0, 0.0}, {1, 1, 0});
    auto b = layer_model({4.0, 1.0, 0.0}, {1, 1, 0});
    const std::vector<nn::SparseModel64> two{a, a};
    const double eq[] = {1.0, 1.0};
    CHECK(aggregate<double>(two, eq) == a);

    const std::vector<nn::SparseModel64> ab{a, b};
    const double w[] = {0.25, 0.75};
    const auto m = aggregate<double>(ab, w);
    CHECK(m.weights[0][0] == 3.0);
    CHECK(m.weights[0][1] == 1.0);

    auto c = layer_model({1.0, 0.0, 1.0}, {1, 0, 1});
    const std::vector<nn::SparseModel64> bad{a, c};
    CHECK_THROWS_AS(aggregate<double>(bad, eq), ProtocolError);

    // Three random clients against a long double reference.
    Rng rng(4);
    std::vector<nn::SparseModel64> ds;
    for (int k = 0; k < 3; ++k) {
        std::vector<double> v(50);
        for (auto &x : v)
            x = rng.normal();
        ds.push_back(layer_model(v, std::vector<std::uint8_t>(50, 1)));
    }
    const double ws[] = {0.2, 0.5, 0.3};
    const auto agg = aggregate<double>(ds, ws);
    for (std::size_t i = 0; i < 50; ++i) {
        long double ref = 0;
        for (std::size_t k = 0; k < 3; ++k)
            ref += static_cast<long double>(ws[k]) * ds[k].weights[0][i];
        CHECK(std::abs(agg.weights[0][i] - static_cast<double>(ref)) <= 1e-12);
    }
    // Float models round the 64-bit sum once.
    std::vector<nn::SparseModel> fs;
    for (const auto &d : ds)
        fs.push_back(d.cast<float>());
    const auto aggf = aggregate<float>(fs, ws);
    for (std::size_t i = 0; i < 50; ++i) {
        double sum = 0;
        for (std::size_t k = 0; k < 3; ++k)
            sum += ws[k] * static_cast<double>(fs[k].weights[0][i]);
        CHECK(aggf.weights[0][i] == static_cast<float>(sum));
    }
}

TEST_CASE("TopK extraction matches a full sort over pruned positions") {
    Rng rng(7);
    const std::size_t n = 200;
    std::vector<std::uint8_t> keep(n);
    std::vector<double> w(n, 0.0), g(n);
    for (std::size_t i = 0; i < n; ++i) {
        keep[i] = rng.uniform() < 0.3 ? 1 : 0;
        if (keep[i])
            w[i] = rng.normal();
        g[i] = std::round(rng.normal() * 4) / 4; // plenty of ties
    }
    const auto m = layer_model(w, keep);
    const double zeta = 0.3;
    const auto t = extract_topk(m, grads_of(g), zeta);
    const std::size_t unpruned = std::count(keep.begin(), keep.end(), 1);
    const auto k = static_cast<std::size_t>(std::llround(zeta * static_cast<double>(unpruned)));

    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < n; ++i)
        if (!keep[i])
            cand.push_back(i);
    std::stable_sort(cand.begin(), cand.end(),
                     [&](std::size_t x, std::size_t y) { return std::abs(g[x]) > std::abs(g[y]); });
    cand.resize(k);
    std::sort(cand.begin(), cand.end());
    REQUIRE(t.indices[0].size() == k);
    for (std::size_t j = 0; j < k; ++j) {
        CHECK(t.indices[0][j] == cand[j]);
        CHECK(t.values[0][j] == g[cand[j]]);
    }
    CHECK(extract_topk(m, grads_of(g), zeta, {0}).total() == 0);
}

TEST_CASE("TopK aggregation over the index union") {
    TopKGradients a{{{1, 4}}, {{2.0, -1.0}}};
    TopKGradients b{{{4, 6}}, {{3.0, 5.0}}};
    const std::vector<TopKGradients> sets{a, b};
    const double w[] = {1.0, 3.0};
    const auto s = aggregate_topk(sets, w);
    CHECK(s.indices[0] == std::vector<std::uint32_t>{1, 4, 6});
    CHECK(s.values[0][0] == doctest::Approx(0.5));
    CHECK(s.values[0][1] == doctest::Approx(-0.25 + 2.25));
    CHECK(s.values[0][2] == doctest::Approx(3.75));
}

TEST_CASE("structure adjustment") {
    SUBCASE("zero rate leaves the model unchanged") {
        auto m = layer_model({0.5, 0.0, -0.2, 0.0}, {1, 0, 1, 0});
        const auto before = m;
        TopKGradients none{{{}}, {{}}};
        adjust_structure(m, none, 0.0);
        CHECK(m == before);
    }
    SUBCASE("one swap agrees with enumeration") {
        // Unpruned {0: 0.5, 2: -0.2, 3: 0.9}; pruned {1, 4, 5} with gradients.
        auto m = layer_model({0.5, 0.0, -0.2, 0.9, 0.0, 0.0}, {1, 0, 1, 1, 0, 0});
        TopKGradients g{{{1, 4, 5}}, {{0.3, -0.8, 0.1}}};
        const auto adj = adjust_structure(m, g, 1.0 / 3.0);
        REQUIRE(adj.size() == 1);
        // Enumerate the candidates: largest |g| among reported, smallest |w| among unpruned.
        const std::vector<double> w{0.5, 0.0, -0.2, 0.9, 0.0, 0.0};
        std::size_t grow = g.indices[0][0];
        double best_g = -1.0;
        for (std::size_t j = 0; j < g.indices[0].size(); ++j)
            if (std::abs(g.values[0][j]) > best_g) {
                best_g = std::abs(g.values[0][j]);
                grow = g.indices[0][j];
            }
        std::size_t drop = 0;
        double best_w = 1e300;
        for (std::size_t i : {0, 2, 3})
            if (std::abs(w[i]) < best_w) {
                best_w = std::abs(w[i]);
                drop = i;
            }
        CHECK(grow == 4);
        CHECK(drop == 2);
        CHECK(adj[0].grown == std::vector<std::uint32_t>{static_cast<std::uint32_t>(grow)});
        CHECK(adj[0].dropped == std::vector<std::uint32_t>{static_cast<std::uint32_t>(drop)});
        CHECK(m.weights[0].mask()[grow]);
        CHECK(m.weights[0][grow] == 0.0);
        CHECK_FALSE(m.weights[0].mask()[drop]);
        CHECK(m.weights[0].mask().count_kept() == 3);
    }
    SUBCASE("a reported index must be pruned") {
        auto m = layer_model({0.5, 0.0, -0.2}, {1, 0, 1});
        TopKGradients g{{{0}}, {{1.0}}};
        CHECK_THROWS_AS(adjust_structure(m, g, 0.5), ProtocolError);
    }
}

TEST_CASE("one local epoch on one batch is one plain gradient step") {
    auto cfg = tiny_config();
    cfg.variant = Variant::FedAvgDense;
    const auto [train, test] = load_datasets(cfg, 3);
    const auto global = initial_model(cfg, 3);
    std::vector<std::size_t> shard{0, 5, 13, 30};
    LocalSettings ls;
    ls.epochs = 1;
    ls.batch_size = shard.size();
    ls.lr0 = 0.05;
    ls.lr_decay = 1.0;
    const auto res = local_train(global, train, shard, ls, nullptr, Rng(9));

    auto manual = global;
    const auto x = train.batch<float>(shard);
    const auto labels = train.batch_labels(shard);
    auto fr = nn::forward(manual, x);
    const auto lg = nn::loss_and_grad(fr.output, labels);
    const auto g = nn::backward(manual, fr.trace, lg.grad);
    nn::apply_masked_step(manual, g, 0.05f);
    for (std::size_t k = 0; k < manual.weights.size(); ++k)
        for (std::size_t i = 0; i < manual.weights[k].size(); ++i)
            CHECK(res.model.weights[k][i] == doctest::Approx(manual.weights[k][i]).epsilon(1e-5));
    CHECK(res.steps == 1);
}

TEST_CASE("a single client round equals local training") {
    auto cfg = tiny_config();
    cfg.variant = Variant::FedAvgDense;
    cfg.clients = 1;
    cfg.rounds = 1;
    cfg.adjust_stop = 1;
    cfg.adjust_period = 1;
    const auto [train, test] = load_datasets(cfg, 4);
    const auto res = run(cfg, 4, train, test);
    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), 0);
    LocalSettings ls;
    ls.epochs = cfg.local_epochs;
    ls.batch_size = cfg.batch_size;
    ls.lr0 = cfg.lr0;
    ls.lr_decay = cfg.lr_decay;
    ls.collect_topk = true; // round 0 is an adjustment round; a dense model reports nothing
    // Client stream id 7, round 0, client 0.
    const auto local = local_train(initial_model(cfg, 4), train, all, ls, nullptr, Rng::derive(4, 7, 0, 0));
    CHECK(res.final_model.weights == local.model.weights);
}

TEST_CASE("desk-style run keeps its invariants") {
    auto cfg = tiny_config();
    const auto [train, test] = load_datasets(cfg, 2);
    const auto res = run(cfg, 2, train, test);
    REQUIRE(res.rounds.size() == cfg.rounds);
    REQUIRE(res.adjustments.size() == 3); // rounds 0, 2, 4
    for (const auto &a : res.adjustments) {
        CHECK(a.nonzero_grown == 0);
        CHECK(a.sparsity_after == doctest::Approx(cfg.mask_sparsity).epsilon(1e-3));
    }
    for (const auto &m : res.rounds) {
        CHECK(m.wire_bits <= m.wire_bound_bits);
        CHECK(m.post_adjust_drop.has_value() == m.adjusted);
        CHECK(std::isfinite(m.train_loss));
    }
    // Deterministic given the seed.
    const auto again = run(cfg, 2, train, test);
    CHECK(again.final_model == res.final_model);
}

TEST_CASE("run validates before training") {
    auto cfg = tiny_config();
    cfg.adjust_stop = 100;
    const auto [train, test] = load_datasets(tiny_config(), 1);
    CHECK_THROWS_AS(run(cfg, 1, train, test), ConfigError);
}
