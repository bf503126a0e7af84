#include "fedmef/fl/protocol.hpp"

#include "fedmef/bae/extrusion.hpp"
#include "fedmef/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace fedmef::fl {

std::size_t TopKGradients::total() const noexcept {
    std::size_t n = 0;
    for (const auto &v : indices)
        n += v.size();
    return n;
}

namespace {

bool excluded(const std::vector<std::size_t> &exclude, std::size_t l) {
    return std::find(exclude.begin(), exclude.end(), l) != exclude.end();
}

std::vector<double> normalized(std::span<const double> weights) {
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w))
            throw ProtocolError("aggregation weight must be finite and non-negative");
        sum += w;
    }
    if (!(sum > 0.0))
        throw ProtocolError("aggregation weights sum to zero");
    std::vector<double> out(weights.begin(), weights.end());
    for (auto &w : out)
        w /= sum;
    return out;
}

} // namespace

template <typename Real>
TopKGradients extract_topk(const nn::BasicSparseModel<Real> &model, const nn::GradientSet<Real> &grads, double zeta,
                           const std::vector<std::size_t> &exclude) {
    if (grads.weights.size() != model.weights.size())
        throw ProtocolError("extract_topk: gradient set does not match the model");
    TopKGradients out;
    out.indices.resize(model.weights.size());
    out.values.resize(model.weights.size());
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        if (excluded(exclude, l))
            continue;
        const auto &mask = model.weights[l].mask();
        const auto &g = grads.weights[l];
        if (g.size() != mask.size())
            throw ProtocolError("extract_topk: gradient size mismatch in layer " + std::to_string(l));
        auto pruned = mask.pruned_indices();
        const std::size_t k = std::min(bae::marked_count(mask.count_kept(), zeta), pruned.size());
        if (k == 0)
            continue;
        auto larger = [&](std::size_t a, std::size_t b) {
            const Real ga = std::abs(g[a]), gb = std::abs(g[b]);
            return ga > gb || (ga == gb && a < b);
        };
        std::nth_element(pruned.begin(), pruned.begin() + static_cast<std::ptrdiff_t>(k - 1), pruned.end(), larger);
        pruned.resize(k);
        std::sort(pruned.begin(), pruned.end());
        for (auto i : pruned) {
            out.indices[l].push_back(static_cast<std::uint32_t>(i));
            out.values[l].push_back(static_cast<double>(g[i]));
        }
    }
    return out;
}

template <typename Real>
nn::BasicSparseModel<Real> aggregate(std::span<const nn::BasicSparseModel<Real>> updates,
                                     std::span<const double> weights) {
    if (updates.empty())
        throw ProtocolError("aggregate: no updates");
    if (updates.size() != weights.size())
        throw ProtocolError("aggregate: one weight per update required");
    const auto p = normalized(weights);
    const auto &ref = updates.front();
    for (const auto &u : updates) {
        if (u.layers != ref.layers || u.weights.size() != ref.weights.size() || u.biases.size() != ref.biases.size())
            throw ProtocolError("aggregate: model layouts differ");
        for (std::size_t l = 0; l < ref.weights.size(); ++l) {
            if (!(u.weights[l].mask() == ref.weights[l].mask()))
                throw ProtocolError("aggregate: masks differ in layer " + std::to_string(l));
            if (u.biases[l].size() != ref.biases[l].size())
                throw ProtocolError("aggregate: bias sizes differ in layer " + std::to_string(l));
        }
    }

    nn::BasicSparseModel<Real> out = ref;
    std::vector<double> acc;
    for (std::size_t l = 0; l < ref.weights.size(); ++l) {
        acc.assign(ref.weights[l].size(), 0.0);
        for (std::size_t k = 0; k < updates.size(); ++k) {
            const auto &v = updates[k].weights[l].values();
            for (std::size_t i = 0; i < v.size(); ++i)
                acc[i] += p[k] * static_cast<double>(v[i]);
        }
        auto &dst = out.weights[l].mutable_values();
        const auto &mask = out.weights[l].mask();
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] = mask[i] ? static_cast<Real>(acc[i]) : Real{0};

        acc.assign(ref.biases[l].size(), 0.0);
        for (std::size_t k = 0; k < updates.size(); ++k)
            for (std::size_t i = 0; i < acc.size(); ++i)
                acc[i] += p[k] * static_cast<double>(updates[k].biases[l][i]);
        for (std::size_t i = 0; i < acc.size(); ++i)
            out.biases[l][i] = static_cast<Real>(acc[i]);
    }
    return out;
}

TopKGradients aggregate_topk(std::span<const TopKGradients> sets, std::span<const double> weights) {
    if (sets.size() != weights.size())
        throw ProtocolError("aggregate_topk: one weight per set required");
    TopKGradients out;
    if (sets.empty())
        return out;
    const auto p = normalized(weights);
    const std::size_t layers = sets.front().indices.size();
    out.indices.resize(layers);
    out.values.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        std::map<std::uint32_t, double> sum;
        for (std::size_t k = 0; k < sets.size(); ++k) {
            const auto &s = sets[k];
            if (s.indices.size() != layers || s.values.size() != layers || s.indices[l].size() != s.values[l].size())
                throw ProtocolError("aggregate_topk: malformed gradient set");
            for (std::size_t j = 0; j < s.indices[l].size(); ++j)
                sum[s.indices[l][j]] += p[k] * s.values[l][j];
        }
        for (const auto &[i, v] : sum) {
            out.indices[l].push_back(i);
            out.values[l].push_back(v);
        }
    }
    return out;
}

template <typename Real>
std::vector<LayerAdjustment> adjust_structure(nn::BasicSparseModel<Real> &model, const TopKGradients &gradients,
                                              double zeta, const std::vector<std::size_t> &exclude) {
    if (gradients.indices.size() != model.weights.size() && !(gradients.indices.empty() && zeta == 0.0))
        throw ProtocolError("adjust_structure: gradient set does not match the model");
    std::vector<LayerAdjustment> report;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        auto &w = model.weights[l];
        LayerAdjustment adj;
        adj.layer = l;
        adj.sparsity_before = w.mask().sparsity();
        adj.sparsity_after = adj.sparsity_before;
        if (excluded(exclude, l) || zeta == 0.0) {
            report.push_back(std::move(adj));
            continue;
        }
        const auto &mask = w.mask();
        const auto &idx = gradients.indices[l];
        const auto &val = gradients.values[l];
        for (auto i : idx)
            if (i >= mask.size() || mask[i])
                throw ProtocolError("adjust_structure: reported gradient at an unpruned or invalid position");

        auto kept = mask.kept_indices();
        std::size_t count = std::min(bae::marked_count(kept.size(), zeta), idx.size());
        if (count >= kept.size() && count > 0)
            throw LayerExhaustionError("adjust_structure: layer " + std::to_string(l) + " would lose every weight");

        std::vector<std::size_t> order(idx.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double ga = std::abs(val[a]), gb = std::abs(val[b]);
            return ga > gb || (ga == gb && idx[a] < idx[b]);
        });
        for (std::size_t j = 0; j < count; ++j)
            adj.grown.push_back(idx[order[j]]);

        const auto &v = w.values();
        std::sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
            const Real ma = std::abs(v[a]), mb = std::abs(v[b]);
            return ma < mb || (ma == mb && a < b);
        });
        for (std::size_t j = 0; j < count; ++j)
            adj.dropped.push_back(static_cast<std::uint32_t>(kept[j]));
        std::sort(adj.grown.begin(), adj.grown.end());
        std::sort(adj.dropped.begin(), adj.dropped.end());

        sparse::Mask next = mask;
        for (auto i : adj.dropped)
            next.set(i, false);
        for (auto i : adj.grown)
            next.set(i, true);
        // Grown entries were pruned and therefore already zero.
        w.reset_mask(std::move(next));
        adj.sparsity_after = w.mask().sparsity();
        report.push_back(std::move(adj));
    }
    return report;
}

#define FEDMEF_PROTOCOL_INSTANTIATE(R)                                                                               \
    template TopKGradients extract_topk<R>(const nn::BasicSparseModel<R> &, const nn::GradientSet<R> &, double,      \
                                           const std::vector<std::size_t> &);                                        \
    template nn::BasicSparseModel<R> aggregate<R>(std::span<const nn::BasicSparseModel<R>>,                          \
                                                  std::span<const double>);                                          \
    template std::vector<LayerAdjustment> adjust_structure<R>(nn::BasicSparseModel<R> &, const TopKGradients &,      \
                                                              double, const std::vector<std::size_t> &);

FEDMEF_PROTOCOL_INSTANTIATE(float)
FEDMEF_PROTOCOL_INSTANTIATE(double)

} // namespace fedmef::fl
