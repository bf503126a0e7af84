#pragma once

#include "fedmef/nn/tensor.hpp"

#include <cstdint>
#include <vector>

namespace fedmef::sap {

/// Activation-pruning settings for one forward pass.
struct SapConfig {
    /// Target cache sparsity s_ta in [0, 1). Zero disables pruning.
    double target_sparsity = 0.0;
    /// Per weighted layer enable flags; empty means every weighted layer.
    std::vector<bool> enabled_layers;

    bool active() const noexcept { return target_sparsity > 0.0; }
    bool enabled_for(std::size_t weighted_index) const noexcept {
        return active() && (enabled_layers.empty() ||
                            (weighted_index < enabled_layers.size() && enabled_layers[weighted_index]));
    }
};

/// Top-k magnitude-pruned copy of a layer input, kept for the weight-gradient computation.
template <typename Real> struct ActivationCache {
    nn::Dims4 dims;
    /// Flat NCHW indices of kept elements, ascending.
    std::vector<std::uint32_t> indices;
    std::vector<Real> values;

    std::size_t element_count() const noexcept { return dims.count(); }
    std::size_t kept() const noexcept { return indices.size(); }
    /// Achieved sparsity s_a; 0 for an empty tensor.
    double sparsity() const noexcept;
};

/// Number of elements kept for a tensor of n elements: ceil((1 - s_ta) * n), so s_a >= s_ta.
std::size_t kept_count(std::size_t n, double target_sparsity);

/// Keeps the kept_count(n, s_ta) largest-|value| elements; ties go to the lower flat index.
/// Throws InvalidArgument unless 0 <= s_ta < 1.
template <typename Real> ActivationCache<Real> prune_activation(const nn::Tensor4D<Real> &act, double target_sparsity);

/// Dense tensor with zeros at non-kept positions. Throws CorruptCacheError on bad indices.
template <typename Real> nn::Tensor4D<Real> densify(const ActivationCache<Real> &cache);

/// Throws CorruptCacheError unless indices are in range, strictly ascending and paired with values.
template <typename Real> void validate(const ActivationCache<Real> &cache);

/// Bits to hold the cache under the density-selected scheme (2-D view: N*C*H rows by W
/// columns), plus one sign bit per element when `sign_bitmap` is set.
template <typename Real>
std::uint64_t cache_storage_bits(const ActivationCache<Real> &cache, unsigned value_bits, bool sign_bitmap);

/// Bits for an uncompressed cache of `n` elements (plus the sign bitmap when requested).
std::uint64_t dense_cache_bits(std::size_t n, unsigned value_bits, bool sign_bitmap);

} // namespace fedmef::sap
