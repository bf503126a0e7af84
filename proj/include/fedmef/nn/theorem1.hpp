#pragma once

#include "fedmef/rng.hpp"

#include <cstddef>

namespace fedmef::nn {

enum class Theorem1Input { ReluGaussian, Constant };

/// Monte-Carlo setup for the output statistics of one conv channel fed by ReLU activations.
struct Theorem1Config {
    std::size_t kernel_size = 3;
    std::size_t in_channels = 8;
    /// Spatial extent of each trial's output map.
    std::size_t out_extent = 4;
    double prune_fraction = 0.5;
    double gamma = 1.0;
    bool nsconv = true;
    /// Raw filter entries ~ N(filter_mean, filter_std^2).
    double filter_mean = 0.0;
    double filter_std = 1.0;
    Theorem1Input input = Theorem1Input::ReluGaussian;
    /// Pre-activation ~ N(input_mean, input_std^2) before the ReLU.
    double input_mean = 0.0;
    double input_std = 1.0;
    double constant_value = 1.0;
};

struct Theorem1Report {
    std::size_t trials = 0;
    bool insufficient_samples = false; ///< fewer than 100 trials

    double measured_mean = 0.0; ///< mean of per-trial channel means
    double mean_stderr = 0.0;   ///< standard error of that estimate
    double measured_variance = 0.0;

    double input_mean = 0.0;     ///< mu_f, measured over all inputs
    double input_variance = 0.0; ///< sigma_f^2, measured
    double mean_kept = 0.0;      ///< average unpruned entries per filter

    /// Mean shift expected without normalization under cross-correlation: kept * mu_theta * mu_f.
    double predicted_plain_mean = 0.0;
    /// Closed form gamma^2 (sigma_f^2 + mu_f^2), derived with the output divided by c_in.
    double closed_form_variance = 0.0;
    /// NSConv prediction under plain cross-correlation: kept * gamma^2 * c_in * sigma_f^2.
    double convention_variance = 0.0;
    /// measured_variance / closed_form_variance.
    double variance_ratio = 0.0;
};

Theorem1Report theorem1_check(const Theorem1Config &config, std::size_t n_trials, Rng &rng);

} // namespace fedmef::nn
