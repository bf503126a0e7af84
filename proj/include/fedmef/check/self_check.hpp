#pragma once

#include "fedmef/nn/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fedmef::check {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

/// Two NSConv layers and a linear classifier on 2x8x8 inputs, half of every layer pruned.
nn::SparseModel64 gradient_check_model(std::uint64_t seed);

/// Analytic gradients against central differences (64-bit), relative error < 1e-4.
CheckResult check_gradients(std::uint64_t seed);

/// Zero response to constant input, standardized weight moments, and the Monte-Carlo channel
/// mean with and without normalization.
CheckResult check_nsconv(std::size_t mc_trials, std::uint64_t seed);

/// Weight gradients from pruned caches against the zeroed-dense reference, and top-k
/// selection against a full sort.
CheckResult check_sap(std::size_t topk_tensors, std::uint64_t seed);

/// Randomized encode/decode round trips and closed-form bit counts, including the density
/// band boundaries.
CheckResult check_codec(std::size_t trials, std::uint64_t seed);

/// Endpoints and identities of the adjustment-rate and learning-rate schedules.
CheckResult check_schedule();

/// The whole suite at small sizes (quick) or at full size.
std::vector<CheckResult> run_self_check(bool quick);

} // namespace fedmef::check
