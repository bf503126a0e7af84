#include "fedmef/nn/nsconv.hpp"

#include "fedmef/errors.hpp"

#include <cmath>

namespace fedmef::nn {

namespace {

template <typename Real>
FilterStats<Real> filter_stats(const Real *w, const std::uint8_t *keep, std::size_t len) {
    FilterStats<Real> s;
    Real sum{0};
    for (std::size_t j = 0; j < len; ++j)
        if (keep[j]) {
            sum += w[j];
            ++s.kept;
        }
    if (s.kept == 0) {
        s.stddev = static_cast<Real>(kNsconvEpsilon);
        s.guarded = true;
        return s;
    }
    s.mean = sum / static_cast<Real>(s.kept);
    Real sq{0};
    for (std::size_t j = 0; j < len; ++j)
        if (keep[j]) {
            const Real d = w[j] - s.mean;
            sq += d * d;
        }
    s.stddev = std::sqrt(sq / static_cast<Real>(s.kept));
    if (s.stddev < static_cast<Real>(kNsconvEpsilon)) {
        s.stddev = static_cast<Real>(kNsconvEpsilon);
        s.guarded = true;
    }
    return s;
}

template <typename Real>
void standardize_one(const Real *w, const std::uint8_t *keep, std::size_t len, Real scale, const FilterStats<Real> &s,
                     Real *out) {
    for (std::size_t j = 0; j < len; ++j)
        out[j] = keep[j] ? scale * (w[j] - s.mean) / s.stddev : Real{0};
}

} // namespace

template <typename Real>
std::vector<Real> nsconv_standardize(const sparse::BasicMaskedTensor<Real> &filter, std::size_t in_channels,
                                     double gamma) {
    if (filter.mask().count_kept() < 2)
        throw DegenerateFilterError("nsconv_standardize: filter needs at least two unpruned entries");
    if (!(gamma > 0.0))
        throw InvalidArgument("nsconv_standardize: gamma must be positive");
    const auto s = filter_stats(filter.values().data(), filter.mask().bits().data(), filter.size());
    std::vector<Real> out(filter.size());
    const Real scale = static_cast<Real>(gamma * std::sqrt(static_cast<double>(in_channels)));
    standardize_one(filter.values().data(), filter.mask().bits().data(), filter.size(), scale, s, out.data());
    return out;
}

template <typename Real>
void standardize_filters(const sparse::BasicMaskedTensor<Real> &weights, std::size_t out_channels,
                         std::size_t in_channels, double gamma, std::span<Real> out,
                         std::vector<FilterStats<Real>> &stats) {
    const std::size_t len = weights.size() / out_channels;
    const Real scale = static_cast<Real>(gamma * std::sqrt(static_cast<double>(in_channels)));
    stats.resize(out_channels);
    const Real *w = weights.values().data();
    const std::uint8_t *keep = weights.mask().bits().data();
    for (std::size_t co = 0; co < out_channels; ++co) {
        stats[co] = filter_stats(w + co * len, keep + co * len, len);
        standardize_one(w + co * len, keep + co * len, len, scale, stats[co], out.data() + co * len);
    }
}

template <typename Real>
void standardize_filters_backward(const sparse::BasicMaskedTensor<Real> &weights, std::size_t out_channels,
                                  std::size_t in_channels, double gamma, std::span<const Real> standardized,
                                  const std::vector<FilterStats<Real>> &stats, std::span<const Real> d_standardized,
                                  std::span<Real> d_raw) {
    const std::size_t len = weights.size() / out_channels;
    const Real scale = static_cast<Real>(gamma * std::sqrt(static_cast<double>(in_channels)));
    const std::uint8_t *keep = weights.mask().bits().data();
    for (std::size_t co = 0; co < out_channels; ++co) {
        const auto &s = stats[co];
        if (s.kept == 0)
            continue;
        const std::size_t base = co * len;
        // z_j = (w_j - mean) / std = standardized_j / scale
        Real mean_g{0}, mean_gz{0};
        for (std::size_t j = 0; j < len; ++j)
            if (keep[base + j]) {
                const Real g = d_standardized[base + j];
                mean_g += g;
                mean_gz += g * (standardized[base + j] / scale);
            }
        const Real inv_n = Real{1} / static_cast<Real>(s.kept);
        mean_g *= inv_n;
        mean_gz *= inv_n;
        // With the guard active the deviation is a constant, so the z-term drops out.
        if (s.guarded)
            mean_gz = Real{0};
        const Real factor = scale / s.stddev;
        for (std::size_t j = 0; j < len; ++j)
            if (keep[base + j]) {
                const Real z = standardized[base + j] / scale;
                d_raw[base + j] = factor * (d_standardized[base + j] - mean_g - z * mean_gz);
            }
    }
}

template std::vector<float> nsconv_standardize<float>(const sparse::BasicMaskedTensor<float> &, std::size_t, double);
template std::vector<double> nsconv_standardize<double>(const sparse::BasicMaskedTensor<double> &, std::size_t,
                                                        double);
template void standardize_filters<float>(const sparse::BasicMaskedTensor<float> &, std::size_t, std::size_t, double,
                                         std::span<float>, std::vector<FilterStats<float>> &);
template void standardize_filters<double>(const sparse::BasicMaskedTensor<double> &, std::size_t, std::size_t,
                                          double, std::span<double>, std::vector<FilterStats<double>> &);
template void standardize_filters_backward<float>(const sparse::BasicMaskedTensor<float> &, std::size_t, std::size_t,
                                                  double, std::span<const float>,
                                                  const std::vector<FilterStats<float>> &, std::span<const float>,
                                                  std::span<float>);
template void standardize_filters_backward<double>(const sparse::BasicMaskedTensor<double> &, std::size_t,
                                                   std::size_t, double, std::span<const double>,
                                                   const std::vector<FilterStats<double>> &,
                                                   std::span<const double>, std::span<double>);

} // namespace fedmef::nn
