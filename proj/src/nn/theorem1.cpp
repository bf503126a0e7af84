#include "fedmef/nn/theorem1.hpp"

#include "fedmef/errors.hpp"
#include "fedmef/nn/network.hpp"

#include <cmath>
#include <iostream>

namespace fedmef::nn {

Theorem1Report theorem1_check(const Theorem1Config &cfg, std::size_t n_trials, Rng &rng) {
    if (n_trials == 0)
        throw InvalidArgument("theorem1_check: need at least one trial");
    Theorem1Report rep;
    rep.trials = n_trials;
    if (n_trials < 100) {
        rep.insufficient_samples = true;
        std::cerr << "warning: theorem1_check with " << n_trials << " trials (< 100); estimates are unreliable\n";
    }

    const std::size_t k = cfg.kernel_size;
    const std::size_t side = cfg.out_extent + k - 1;
    SparseModel64 model;
    model.input = {cfg.in_channels, side, side};
    model.layers = {LayerSpec::conv(cfg.in_channels, 1, k, 1, 0, cfg.nsconv, cfg.gamma)};
    model.weighted = {0};
    model.biases = {{}};
    const sparse::Shape wshape{1, cfg.in_channels, k, k};
    const std::size_t wlen = cfg.in_channels * k * k;


    double sum_trial_mean = 0.0, sum_trial_mean_sq = 0.0;
    double sum_out = 0.0, sum_out_sq = 0.0;
    std::size_t out_count = 0;
    double sum_in = 0.0, sum_in_sq = 0.0;
    std::size_t in_count = 0;
    double kept_total = 0.0;

    for (std::size_t t = 0; t < n_trials; ++t) {
        sparse::Mask mask;
        do {
            mask = sparse::random_prune(wshape, cfg.prune_fraction, rng.next_u64());
        } while (mask.count_kept() < 2);
        std::vector<double> w(wlen);
        for (auto &v : w)
            v = rng.normal(cfg.filter_mean, cfg.filter_std);
        model.weights = {sparse::MaskedTensor64::masked(std::move(w), std::move(mask))};
        kept_total += static_cast<double>(model.weights[0].mask().count_kept());

        Tensor4D<double> x({1, cfg.in_channels, side, side});
        for (auto &v : x.data) {
            v = cfg.input == Theorem1Input::Constant ? cfg.constant_value
                                                     : std::max(0.0, rng.normal(cfg.input_mean, cfg.input_std));
            sum_in += v;
            sum_in_sq += v * v;
        }
        in_count += x.size();

        const auto y = predict(model, x, kernels::Backend::Serial);
        double trial_sum = 0.0;
        for (double v : y.data) {
            trial_sum += v;
            sum_out += v;
            sum_out_sq += v * v;
        }
        out_count += y.size();
        const double trial_mean = trial_sum / static_cast<double>(y.size());
        sum_trial_mean += trial_mean;
        sum_trial_mean_sq += trial_mean * trial_mean;
    }

    const double nt = static_cast<double>(n_trials);
    rep.measured_mean = sum_trial_mean / nt;
    const double trial_var = n_trials > 1 ? (sum_trial_mean_sq - nt * rep.measured_mean * rep.measured_mean) / (nt - 1.0)
                                          : 0.0;
    rep.mean_stderr = std::sqrt(std::max(0.0, trial_var) / nt);
    const double out_mean = sum_out / static_cast<double>(out_count);
    rep.measured_variance = std::max(0.0, sum_out_sq / static_cast<double>(out_count) - out_mean * out_mean);

    rep.input_mean = sum_in / static_cast<double>(in_count);
    rep.input_variance = std::max(0.0, sum_in_sq / static_cast<double>(in_count) - rep.input_mean * rep.input_mean);
    rep.mean_kept = kept_total / nt;

    rep.predicted_plain_mean = rep.mean_kept * cfg.filter_mean * rep.input_mean;
    rep.closed_form_variance =
        cfg.gamma * cfg.gamma * (rep.input_variance + rep.input_mean * rep.input_mean);
    rep.convention_variance =
        rep.mean_kept * cfg.gamma * cfg.gamma * static_cast<double>(cfg.in_channels) * rep.input_variance;
    rep.variance_ratio = rep.closed_form_variance > 0.0 ? rep.measured_variance / rep.closed_form_variance : 0.0;
    return rep;
}

} // namespace fedmef::nn
