#include "fedmef/bae/extrusion.hpp"

#include "fedmef/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace fedmef::bae {

double adjustment_rate(double t_iter, double r_stop, double epochs) {
    if (t_iter < 0.0)
        throw InvalidArgument("adjustment_rate: negative iteration");
    const double horizon = r_stop * epochs;
    if (!(horizon > 0.0))
        throw InvalidArgument("adjustment_rate: stop horizon must be positive");
    if (t_iter > horizon)
        return 0.0;
    return 0.2 * (1.0 + std::cos(t_iter * std::numbers::pi / horizon));
}

std::size_t marked_count(std::size_t n_unpruned, double zeta) {
    if (zeta < 0.0 || zeta > 1.0)
        throw InvalidArgument("marked_count: rate outside [0, 1]");
    return static_cast<std::size_t>(std::llround(zeta * static_cast<double>(n_unpruned)));
}

std::size_t ExtrusionPlan::total_marked() const noexcept {
    std::size_t n = 0;
    for (const auto &m : marked)
        n += m.size();
    return n;
}

template <typename Real>
ExtrusionPlan mark_low_magnitude(const nn::BasicSparseModel<Real> &model, double zeta,
                                 const std::vector<std::size_t> &exclude) {
    ExtrusionPlan plan;
    plan.marked.resize(model.weights.size());
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        if (std::find(exclude.begin(), exclude.end(), l) != exclude.end())
            continue;
        const auto &w = model.weights[l];
        auto kept = w.mask().kept_indices();
        const std::size_t count = marked_count(kept.size(), zeta);
        if (count == 0)
            continue;
        if (count >= kept.size())
            throw LayerExhaustionError("mark_low_magnitude: layer " + std::to_string(l) +
                                       " would lose all unpruned weights");
        const auto &v = w.values();
        auto smaller = [&](std::size_t a, std::size_t b) {
            const Real ma = std::abs(v[a]), mb = std::abs(v[b]);
            return ma < mb || (ma == mb && a < b);
        };
        std::nth_element(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(count - 1), kept.end(), smaller);
        kept.resize(count);
        std::sort(kept.begin(), kept.end());
        plan.marked[l].assign(kept.begin(), kept.end());
    }
    return plan;
}

template <typename Real> double marked_norm(const nn::BasicSparseModel<Real> &model, const ExtrusionPlan &plan) {
    double sq = 0.0;
    for (std::size_t l = 0; l < plan.marked.size(); ++l) {
        const auto &v = model.weights.at(l).values();
        for (auto i : plan.marked[l])
            sq += static_cast<double>(v[i]) * static_cast<double>(v[i]);
    }
    return std::sqrt(sq);
}

template <typename Real>
double surrogate_loss(double base_loss, const nn::BasicSparseModel<Real> &model, const ExtrusionPlan &plan) {
    double penalty = 0.0;
    for (std::size_t l = 0; l < plan.marked.size(); ++l) {
        const auto &v = model.weights.at(l).values();
        for (auto i : plan.marked[l]) {
            const double w = static_cast<double>(v[i]);
            penalty += plan.penalty == Penalty::L2 ? w * w : std::abs(w);
        }
    }
    return base_loss + plan.lambda * penalty;
}

template <typename Real>
void add_penalty_gradient(const nn::BasicSparseModel<Real> &model, const ExtrusionPlan &plan,
                          nn::GradientSet<Real> &grads) {
    if (plan.lambda == 0.0)
        return;
    const Real lam = static_cast<Real>(plan.lambda);
    for (std::size_t l = 0; l < plan.marked.size(); ++l) {
        const auto &v = model.weights.at(l).values();
        auto &g = grads.weights.at(l);
        for (auto i : plan.marked[l]) {
            const Real w = v[i];
            if (plan.penalty == Penalty::L2)
                g[i] += Real{2} * lam * w;
            else
                g[i] += lam * static_cast<Real>((w > Real{0}) - (w < Real{0}));
        }
    }
}

double rex_factor(double t, double budget) {
    if (t < 0.0)
        throw InvalidArgument("rex_factor: negative step");
    if (t >= budget)
        return 0.0;
    return (2.0 * budget - 2.0 * t) / (2.0 * budget - t);
}

double budget_lr(double t, double budget, double theta_low_norm, double eta0) {
    // 2 sigmoid(x) - 1 == tanh(x / 2)
    return rex_factor(t, budget) * std::tanh(theta_low_norm / 2.0) * eta0;
}

double effective_lr(double eta, double beta, bool extruding) {
    if (eta < 0.0 || beta < 0.0)
        throw InvalidArgument("effective_lr: negative learning rate");
    return extruding ? std::max(eta, beta) : eta;
}

double base_lr(double eta0, double decay, std::size_t epoch) {
    return eta0 * std::pow(decay, static_cast<double>(epoch));
}

ScheduleState schedule_at(const ExtrusionPlan &plan, std::size_t step, double eta, double theta_low_norm) {
    ScheduleState s;
    s.step = step;
    s.eta = eta;
    s.theta_low_norm = theta_low_norm;
    s.beta = budget_lr(static_cast<double>(step), static_cast<double>(plan.budget_steps), theta_low_norm, plan.eta0);
    s.mu = effective_lr(eta, s.beta);
    return s;
}

#define FEDMEF_BAE_INSTANTIATE(R)                                                                                    \
    template ExtrusionPlan mark_low_magnitude<R>(const nn::BasicSparseModel<R> &, double,                            \
                                                 const std::vector<std::size_t> &);                                  \
    template double marked_norm<R>(const nn::BasicSparseModel<R> &, const ExtrusionPlan &);                          \
    template double surrogate_loss<R>(double, const nn::BasicSparseModel<R> &, const ExtrusionPlan &);               \
    template void add_penalty_gradient<R>(const nn::BasicSparseModel<R> &, const ExtrusionPlan &,                    \
                                          nn::GradientSet<R> &);

FEDMEF_BAE_INSTANTIATE(float)
FEDMEF_BAE_INSTANTIATE(double)

} // namespace fedmef::bae
