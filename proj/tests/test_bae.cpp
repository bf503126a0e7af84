#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fedmef/bae/extrusion.hpp"
#include "fedmef/errors.hpp"
#include "fedmef/nn/network.hpp"

#include <cmath>

using namespace fedmef;
using namespace fedmef::bae;

namespace {

nn::SparseModel64 one_layer(std::vector<double> w) {
    nn::SparseModel64 m;
    const std::size_t n = w.size();
    m.input = {n, 1, 1};
    m.layers = {nn::LayerSpec::flatten(), nn::LayerSpec::linear(n, 1)};
    m.weighted = {1};
    m.weights = {sparse::MaskedTensor64(std::move(w), sparse::Mask({1, n}, true))};
    m.biases = {{0.0}};
    return m;
}

} // namespace

TEST_CASE("adjustment rate") {
    CHECK(adjustment_rate(0, 40, 2) == doctest::Approx(0.4));
    CHECK(adjustment_rate(80, 40, 2) == doctest::Approx(0.0));
    CHECK(adjustment_rate(40, 40, 2) == doctest::Approx(0.2));
    CHECK(adjustment_rate(81, 40, 2) == 0.0);
    CHECK_THROWS_AS(adjustment_rate(-1, 40, 2), InvalidArgument);
    CHECK_THROWS_AS(adjustment_rate(0, 0, 2), InvalidArgument);
    CHECK(marked_count(10, 0.25) == 3);
    CHECK(marked_count(10, 0.0) == 0);
}

TEST_CASE("marking low-magnitude weights") {
    const auto m = one_layer({0.1, 0.9, -0.05, 0.7});
    CHECK(mark_low_magnitude(m, 0.0).total_marked() == 0);
    const auto plan = mark_low_magnitude(m, 0.5);
    CHECK(plan.marked[0] == std::vector<std::uint32_t>{0, 2});
    CHECK(marked_norm(m, plan) == doctest::Approx(std::sqrt(0.01 + 0.0025)));
    CHECK(mark_low_magnitude(m, 0.5, {0}).total_marked() == 0);
    CHECK_THROWS_AS(mark_low_magnitude(m, 1.0), LayerExhaustionError);
}

TEST_CASE("surrogate loss and its gradient") {
    auto m = one_layer({0.3, -0.4, 2.0});
    ExtrusionPlan plan;
    plan.marked = {{0, 1}};
    plan.lambda = 0.0;
    CHECK(surrogate_loss(1.5, m, plan) == 1.5);
    plan.lambda = 1.0;
    CHECK(surrogate_loss(1.5, m, plan) == doctest::Approx(1.75));

    nn::GradientSet<double> g;
    g.weights = {{0.0, 0.0, 0.0}};
    g.biases = {{0.0}};
    plan.lambda = 0.7;
    add_penalty_gradient(m, plan, g);
    // Finite difference of the penalty.
    for (std::size_t i = 0; i < 3; ++i) {
        auto up = m, dn = m;
        up.weights[0].mutable_values()[i] += 1e-6;
        dn.weights[0].mutable_values()[i] -= 1e-6;
        const double fd = (surrogate_loss(0, up, plan) - surrogate_loss(0, dn, plan)) / 2e-6;
        CHECK(g.weights[0][i] == doctest::Approx(fd).epsilon(1e-6));
    }
    CHECK(g.weights[0][2] == 0.0);

    plan.penalty = Penalty::L1;
    nn::GradientSet<double> g1;
    g1.weights = {{0.0, 0.0, 0.0}};
    g1.biases = {{0.0}};
    add_penalty_gradient(m, plan, g1);
    CHECK(g1.weights[0] == std::vector<double>{0.7, -0.7, 0.0});
    CHECK(surrogate_loss(0, m, plan) == doctest::Approx(0.7 * 0.7));
}

TEST_CASE("budget schedule") {
    CHECK(rex_factor(0, 10) == 1.0);
    CHECK(rex_factor(10, 10) == 0.0);
    CHECK(rex_factor(5, 10) == doctest::Approx(10.0 / 15.0));
    CHECK(budget_lr(0, 10, 0.0, 1.0) == 0.0);
    CHECK(budget_lr(10, 10, 3.0, 1.0) == 0.0);
    CHECK(budget_lr(11, 10, 3.0, 1.0) == 0.0);
    const double b0 = budget_lr(0, 10, 2.0, 1.0);
    CHECK(b0 == doctest::Approx(2.0 / (1.0 + std::exp(-2.0)) - 1.0));
    CHECK(b0 == doctest::Approx(0.7616).epsilon(1e-4));
    CHECK(effective_lr(0.01, 0.5) == 0.5);
    CHECK(effective_lr(0.9, 0.1) == 0.9);
    CHECK(effective_lr(0.3, b0) == b0);
    CHECK(effective_lr(0.3, b0, false) == 0.3);
    CHECK_THROWS_AS(effective_lr(-0.1, 0.2), InvalidArgument);
    CHECK(base_lr(1.0, 0.5, 3) == 0.125);

    ExtrusionPlan plan;
    plan.budget_steps = 8;
    plan.eta0 = 1.0;
    plan.start_step = 0;
    const auto st = schedule_at(plan, 0, 0.3, 2.0);
    CHECK(st.beta == doctest::Approx(b0));
    CHECK(st.mu == doctest::Approx(b0));
    CHECK(schedule_at(plan, 8, 0.3, 2.0).mu == 0.3);
}
