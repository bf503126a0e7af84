#pragma once

#include "fedmef/kernels/conv.hpp"
#include "fedmef/nn/model.hpp"
#include "fedmef/nn/nsconv.hpp"
#include "fedmef/nn/tensor.hpp"
#include "fedmef/sap/activation_cache.hpp"

#include <cstdint>
#include <stdexcept>
#include <variant>
#include <vector>

namespace fedmef::nn {

class NonFiniteError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Cached state of one layer between forward and backward.
template <typename Real> struct LayerTrace {
    LayerKind kind = LayerKind::ReLU;
    Dims4 in_dims;
    Dims4 out_dims;
    /// Conv/Linear input: dense copy, or a pruned cache when SAP is on for the layer.
    std::variant<std::monostate, Tensor4D<Real>, sap::ActivationCache<Real>> input;
    /// ReLU: one bit per element, set where the input was positive.
    std::vector<bool> relu_sign;
    /// Conv/Linear: the weights the layer multiplied by (standardized under NSConv).
    std::vector<Real> effective_weights;
    std::vector<FilterStats<Real>> filter_stats;
};

/// Activation-memory figures of one forward pass, in bits at the accounting bitwidth.
struct ActivationBits {
    std::uint64_t cached = 0; ///< what the trace actually holds: caches plus sign bitmaps
    std::uint64_t dense = 0;  ///< the same layers cached uncompressed (sign bitmaps included)
    std::uint64_t sign = 0;   ///< sign-bitmap share of both figures
};

/// Per-layer cache telemetry.
struct CacheRecord {
    std::size_t layer = 0;
    std::uint64_t dense_bits = 0;
    std::uint64_t cache_bits = 0;
    double achieved_sparsity = 0.0;
};

template <typename Real> struct ForwardTrace {
    std::size_t batch = 0;
    /// Layer kinds and output dims of the model that produced the trace.
    std::vector<LayerKind> kinds;
    std::vector<LayerTrace<Real>> layers;
    ActivationBits bits;
    std::vector<CacheRecord> cache_records;
};

struct ForwardOptions {
    sap::SapConfig sap;
    kernels::Backend backend = kernels::Backend::OpenMP;
    /// Bitwidth used for the activation accounting in the trace.
    unsigned value_bits = 32;
};

struct BackwardOptions {
    /// Also fill gradients at pruned weight positions (dL/d effective weight), as RigL-style
    /// growth needs. Otherwise pruned positions carry zero.
    bool dense_weight_grads = false;
    /// Propagate down to the network input. When off, backward stops at the first weighted
    /// layer and GradientSet::input is left empty.
    bool input_grad = true;
    kernels::Backend backend = kernels::Backend::OpenMP;
};

/// Gradients for every weighted layer, shape-matched to the parameters.
template <typename Real> struct GradientSet {
    std::vector<std::vector<Real>> weights;
    std::vector<std::vector<Real>> biases;
    /// dL/d(network input); activation gradients are never pruned.
    Tensor4D<Real> input;
};

template <typename Real> struct ForwardResult {
    Tensor4D<Real> output;
    ForwardTrace<Real> trace;
};

/// Runs the network and records what backward needs. The forward computation always uses
/// dense activations; only the cached copies are pruned.
template <typename Real>
ForwardResult<Real> forward(const BasicSparseModel<Real> &model, const Tensor4D<Real> &input,
                            const ForwardOptions &options = {});

/// Inference only; no trace.
template <typename Real>
Tensor4D<Real> predict(const BasicSparseModel<Real> &model, const Tensor4D<Real> &input,
                       kernels::Backend backend = kernels::Backend::OpenMP);

/// Throws TraceMismatchError if the trace does not belong to this model and gradient shape.
template <typename Real>
GradientSet<Real> backward(const BasicSparseModel<Real> &model, const ForwardTrace<Real> &trace,
                           const Tensor4D<Real> &output_grad, const BackwardOptions &options = {});

/// theta -= lr * grad on unpruned positions; pruned entries stay exactly zero.
template <typename Real>
void apply_masked_step(BasicSparseModel<Real> &model, const GradientSet<Real> &grads, Real lr);

} // namespace fedmef::nn
