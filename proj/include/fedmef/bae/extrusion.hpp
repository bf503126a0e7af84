#pragma once

#include "fedmef/nn/model.hpp"
#include "fedmef/nn/network.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fedmef::bae {

/// Fraction of each layer's unpruned weights swapped at iteration `t_iter`:
/// 0.2 (1 + cos(t_iter pi / (r_stop * epochs))). Zero past the stop point.
/// Throws InvalidArgument for negative t_iter or a zero horizon.
double adjustment_rate(double t_iter, double r_stop, double epochs);

/// round(zeta * n_unpruned).
std::size_t marked_count(std::size_t n_unpruned, double zeta);

enum class Penalty { L2, L1 };

/// Weights selected for extrusion plus the settings of the extrusion phase.
struct ExtrusionPlan {
    /// Per weighted layer: flat indices of the marked weights, ascending.
    std::vector<std::vector<std::uint32_t>> marked;
    double lambda = 0.0;
    Penalty penalty = Penalty::L2;
    /// Local optimizer steps available for the extrusion.
    std::size_t budget_steps = 0;
    double eta0 = 1.0;
    std::size_t start_step = 0;

    std::size_t total_marked() const noexcept;
};

/// Per weighted layer, the round(zeta * n_l) unpruned entries of smallest |w| (ties: lower
/// index). Layers listed in `exclude` (weighted-layer indices) are left unmarked.
/// Throws LayerExhaustionError when a layer would lose every unpruned weight.
template <typename Real>
ExtrusionPlan mark_low_magnitude(const nn::BasicSparseModel<Real> &model, double zeta,
                                 const std::vector<std::size_t> &exclude = {});

/// Euclidean norm of the marked weights across all layers.
template <typename Real> double marked_norm(const nn::BasicSparseModel<Real> &model, const ExtrusionPlan &plan);

/// base_loss + lambda * sum(w^2) over marked weights (sum |w| in L1 mode).
template <typename Real>
double surrogate_loss(double base_loss, const nn::BasicSparseModel<Real> &model, const ExtrusionPlan &plan);

/// Adds the penalty gradient (2 lambda w, or lambda sign(w)) at marked positions.
template <typename Real>
void add_penalty_gradient(const nn::BasicSparseModel<Real> &model, const ExtrusionPlan &plan,
                          nn::GradientSet<Real> &grads);

/// p(t) = (2T - 2t) / (2T - t); zero for t >= T.
double rex_factor(double t, double budget);

/// beta_t = p(t) (2 sigmoid(norm) - 1) eta0. Zero for t > budget.
double budget_lr(double t, double budget, double theta_low_norm, double eta0);

/// max(eta, beta) while extruding, eta otherwise.
double effective_lr(double eta, double beta, bool extruding = true);

/// Base schedule eta0 * decay^epoch.
double base_lr(double eta0, double decay, std::size_t epoch);

/// Schedule state of one client during an extrusion phase.
struct ScheduleState {
    std::size_t step = 0;
    double eta = 0.0;
    double theta_low_norm = 0.0;
    double beta = 0.0;
    double mu = 0.0;
};

/// Fills beta and mu for the given step, eta and current norm.
ScheduleState schedule_at(const ExtrusionPlan &plan, std::size_t step, double eta, double theta_low_norm);

} // namespace fedmef::bae
