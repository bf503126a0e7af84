#pragma once

#include "fedmef/sparse/masked_tensor.hpp"

#include <span>
#include <vector>

namespace fedmef::nn {

/// Guard substituted for a filter standard deviation below it.
inline constexpr double kNsconvEpsilon = 1e-8;

/// Statistics of one filter over its unpruned entries (population divisor).
template <typename Real> struct FilterStats {
    Real mean{0};
    Real stddev{0}; ///< after the epsilon guard
    std::size_t kept = 0;
    bool guarded = false;
};

/// Standardizes a single filter of c_in input channels:
///   out[j] = gamma * sqrt(c_in) * (w[j] - mean) / std   for unpruned j, 0 otherwise.
/// Throws DegenerateFilterError if fewer than two entries are unpruned.
template <typename Real>
std::vector<Real> nsconv_standardize(const sparse::BasicMaskedTensor<Real> &filter, std::size_t in_channels,
                                     double gamma);

/// Standardizes every filter of a (c_out, c_in, k, k) weight tensor into `out`.
///
/// Unlike nsconv_standardize this never throws: a filter with one unpruned entry hits the
/// epsilon guard and standardizes to zero, and an empty filter stays zero. Training can
/// legitimately reach those states after pruning.
template <typename Real>
void standardize_filters(const sparse::BasicMaskedTensor<Real> &weights, std::size_t out_channels,
                         std::size_t in_channels, double gamma, std::span<Real> out,
                         std::vector<FilterStats<Real>> &stats);

/// Chain rule through the standardization. `d_standardized` is dL/d(standardized weight);
/// `d_raw` receives dL/d(raw weight) at unpruned positions. Pruned positions are left
/// untouched so the caller decides what they carry.
template <typename Real>
void standardize_filters_backward(const sparse::BasicMaskedTensor<Real> &weights, std::size_t out_channels,
                                  std::size_t in_channels, double gamma, std::span<const Real> standardized,
                                  const std::vector<FilterStats<Real>> &stats, std::span<const Real> d_standardized,
                                  std::span<Real> d_raw);

} // namespace fedmef::nn
