#include "fedmef/check/oracles.hpp"

#include "fedmef/errors.hpp"
#include "fedmef/nn/loss.hpp"
#include "fedmef/sap/activation_cache.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedmef::check {

std::vector<double> naive_conv(const nn::Tensor4D<double> &x, std::span<const double> w, std::size_t out_channels,
                               std::size_t kernel, std::size_t stride, std::size_t padding) {
    const auto [n_batch, cin, h, wd] = x.dims;
    const std::size_t oh = (h + 2 * padding - kernel) / stride + 1;
    const std::size_t ow = (wd + 2 * padding - kernel) / stride + 1;
    std::vector<double> y(n_batch * out_channels * oh * ow, 0.0);
    for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t o = 0; o < out_channels; ++o)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < cin; ++i)
                        for (std::size_t ky = 0; ky < kernel; ++ky)
                            for (std::size_t kx = 0; kx < kernel; ++kx) {
                                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
                                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd))
                                    continue;
                                acc += w[((o * cin + i) * kernel + ky) * kernel + kx] *
                                       x.at(n, i, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                            }
                    y[((n * out_channels + o) * oh + oy) * ow + ox] = acc;
                }
    return y;
}

std::vector<double> naive_standardize(std::span<const double> filter, std::span<const std::uint8_t> keep,
                                      std::size_t in_channels, double gamma) {
    std::vector<double> kept;
    for (std::size_t j = 0; j < filter.size(); ++j)
        if (keep[j])
            kept.push_back(filter[j]);
    const double n = static_cast<double>(kept.size());
    const double mean = std::accumulate(kept.begin(), kept.end(), 0.0) / n;
    double var = 0.0;
    for (double v : kept)
        var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / n);
    if (sd < 1e-8)
        sd = 1e-8;
    std::vector<double> out(filter.size(), 0.0);
    for (std::size_t j = 0; j < filter.size(); ++j)
        if (keep[j])
            out[j] = gamma * std::sqrt(static_cast<double>(in_channels)) * (filter[j] - mean) / sd;
    return out;
}

std::vector<std::uint32_t> full_sort_topk(std::span<const double> values, std::size_t k) {
    std::vector<std::uint32_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return std::abs(values[a]) > std::abs(values[b]); });
    idx.resize(std::min(k, idx.size()));
    std::sort(idx.begin(), idx.end());
    return idx;
}

double model_loss(const nn::SparseModel64 &model, const nn::Tensor4D<double> &x, std::span<const int> labels) {
    return nn::loss_and_grad(nn::predict(model, x, kernels::Backend::Serial), labels).loss;
}

nn::GradientSet<double> finite_difference_gradients(const nn::SparseModel64 &model, const nn::Tensor4D<double> &x,
                                                    std::span<const int> labels, double step) {
    nn::GradientSet<double> g;
    nn::SparseModel64 probe = model;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        const auto &mask = model.weights[l].mask();
        g.weights.emplace_back(mask.size(), 0.0);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (!mask[i])
                continue;
            auto &v = probe.weights[l].mutable_values()[i];
            const double orig = v;
            v = orig + step;
            const double up = model_loss(probe, x, labels);
            v = orig - step;
            const double down = model_loss(probe, x, labels);
            v = orig;
            g.weights[l][i] = (up - down) / (2.0 * step);
        }
        g.biases.emplace_back(model.biases[l].size(), 0.0);
        for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
            auto &v = probe.biases[l][i];
            const double orig = v;
            v = orig + step;
            const double up = model_loss(probe, x, labels);
            v = orig - step;
            const double down = model_loss(probe, x, labels);
            v = orig;
            g.biases[l][i] = (up - down) / (2.0 * step);
        }
    }
    return g;
}

nn::GradientSet<double> zeroed_cache_reference(const nn::SparseModel64 &model, const nn::Tensor4D<double> &x,
                                               std::span<const int> labels, double activation_sparsity) {
    nn::ForwardOptions opt;
    opt.backend = kernels::Backend::Serial;
    auto fwd = nn::forward(model, x, opt);
    for (auto &lt : fwd.trace.layers) {
        auto *dense = std::get_if<nn::Tensor4D<double>>(&lt.input);
        if (!dense)
            continue;
        const auto keep = full_sort_topk(dense->data, sap::kept_count(dense->size(), activation_sparsity));
        std::vector<double> zeroed(dense->size(), 0.0);
        for (auto i : keep)
            zeroed[i] = dense->data[i];
        dense->data = std::move(zeroed);
    }
    const auto lg = nn::loss_and_grad(fwd.output, labels);
    nn::BackwardOptions bopt;
    bopt.backend = kernels::Backend::Serial;
    return nn::backward(model, fwd.trace, lg.grad, bopt);
}

} // namespace fedmef::check
