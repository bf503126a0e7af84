#pragma once

// Independent reference computations: straightforward loops and full sorts with no sharing of
// code paths with the optimized implementation.

#include "fedmef/nn/model.hpp"
#include "fedmef/nn/network.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fedmef::check {

/// Direct cross-correlation, NCHW input, OIHW filters.
std::vector<double> naive_conv(const nn::Tensor4D<double> &x, std::span<const double> w, std::size_t out_channels,
                               std::size_t kernel, std::size_t stride, std::size_t padding);

/// Filter standardization recomputed from scratch over the unpruned entries.
std::vector<double> naive_standardize(std::span<const double> filter, std::span<const std::uint8_t> keep,
                                      std::size_t in_channels, double gamma);

/// The k largest-|value| flat indices (ties: lower index), ascending, via a full sort.
std::vector<std::uint32_t> full_sort_topk(std::span<const double> values, std::size_t k);

/// Mean cross-entropy of the model on a batch.
double model_loss(const nn::SparseModel64 &model, const nn::Tensor4D<double> &x, std::span<const int> labels);

/// Central-difference gradient of model_loss for every unpruned weight and every bias. Pruned
/// weight positions are reported as 0.
nn::GradientSet<double> finite_difference_gradients(const nn::SparseModel64 &model, const nn::Tensor4D<double> &x,
                                                    std::span<const int> labels, double step);

/// Weight gradients from a dense-cache backward in which every cached input has been replaced
/// by its top-k-zeroed copy (k from the activation target sparsity, selected by full sort).
nn::GradientSet<double> zeroed_cache_reference(const nn::SparseModel64 &model, const nn::Tensor4D<double> &x,
                                               std::span<const int> labels, double activation_sparsity);

} // namespace fedmef::check
