#pragma once

#include "fedmef/nn/model.hpp"
#include "fedmef/nn/network.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fedmef::fl {

/// Per weighted layer: the largest-|gradient| entries at pruned positions, indices ascending.
struct TopKGradients {
    std::vector<std::vector<std::uint32_t>> indices;
    std::vector<std::vector<double>> values;

    std::size_t total() const noexcept;
};

/// Per layer, the round(zeta * n_unpruned) pruned positions with the largest |grad|
/// (ties: lower index). Layers in `exclude` report nothing.
template <typename Real>
TopKGradients extract_topk(const nn::BasicSparseModel<Real> &model, const nn::GradientSet<Real> &grads, double zeta,
                           const std::vector<std::size_t> &exclude = {});

/// Weighted element-wise mean of client models (weights are renormalized to sum to 1). Sums
/// run in 64-bit in the given order. Throws ProtocolError when layouts or masks differ.
template <typename Real>
nn::BasicSparseModel<Real> aggregate(std::span<const nn::BasicSparseModel<Real>> updates,
                                     std::span<const double> weights);

/// Weighted sum of the clients' sparse gradient sets over the union of their indices; a client
/// contributes zero where it reported nothing. Weights are renormalized.
TopKGradients aggregate_topk(std::span<const TopKGradients> sets, std::span<const double> weights);

struct LayerAdjustment {
    std::size_t layer = 0;
    std::vector<std::uint32_t> dropped;
    std::vector<std::uint32_t> grown;
    double sparsity_before = 0.0;
    double sparsity_after = 0.0;
};

/// Server-side prune and grow. Per layer with xi = round(zeta * n_unpruned): grow the (up to)
/// xi reported pruned positions of largest |gradient|, and drop the same number of unpruned
/// positions of smallest |weight| (ties: lower index). Grown entries start at 0. Layers in
/// `exclude` are untouched. Throws ProtocolError if a reported index is not pruned.
template <typename Real>
std::vector<LayerAdjustment> adjust_structure(nn::BasicSparseModel<Real> &model, const TopKGradients &gradients,
                                              double zeta, const std::vector<std::size_t> &exclude = {});

} // namespace fedmef::fl
