#pragma once

#include "fedmef/nn/tensor.hpp"

#include <span>

namespace fedmef::nn {

template <typename Real> struct LossResult {
    Real loss{0};
    /// dLoss/dlogits, same dims as the logits.
    Tensor4D<Real> grad;
};

/// Mean softmax cross-entropy over the batch (max-subtracted). Logits are (N, C, 1, 1).
/// Throws InvalidArgument for a label outside [0, C) or a count mismatch.
template <typename Real> LossResult<Real> loss_and_grad(const Tensor4D<Real> &logits, std::span<const int> labels);

/// Index of the largest logit per sample (lowest index on ties).
template <typename Real> std::vector<int> argmax(const Tensor4D<Real> &logits);

} // namespace fedmef::nn
