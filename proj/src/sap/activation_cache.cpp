#include "fedmef/sap/activation_cache.hpp"

#include "fedmef/errors.hpp"
#include "fedmef/sparse/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fedmef::sap {

template <typename Real> double ActivationCache<Real>::sparsity() const noexcept {
    const std::size_t n = element_count();
    return n == 0 ? 0.0 : 1.0 - static_cast<double>(indices.size()) / static_cast<double>(n);
}

std::size_t kept_count(std::size_t n, double target_sparsity) {
    if (!(target_sparsity >= 0.0 && target_sparsity < 1.0))
        throw InvalidArgument("activation target sparsity must lie in [0, 1)");
    // The slack absorbs representation error in (1 - s) * n, e.g. (1 - 0.7) * 10 = 3.0000000000000004.
    const double exact = (1.0 - target_sparsity) * static_cast<double>(n);
    const auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
    return std::min(k, n);
}

template <typename Real> ActivationCache<Real> prune_activation(const nn::Tensor4D<Real> &act, double target_sparsity) {
    const std::size_t n = act.size();
    if (n > std::numeric_limits<std::uint32_t>::max())
        throw InvalidArgument("prune_activation: tensor too large for 32-bit indices");
    const std::size_t k = kept_count(n, target_sparsity);

    ActivationCache<Real> cache;
    cache.dims = act.dims;
    if (k == n) {
        cache.indices.resize(n);
        std::iota(cache.indices.begin(), cache.indices.end(), 0u);
        cache.values = act.data;
        return cache;
    }

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    const auto &d = act.data;
    const auto before = [&](std::uint32_t a, std::uint32_t b) {
        const Real ma = std::abs(d[a]), mb = std::abs(d[b]);
        return ma != mb ? ma > mb : a < b;
    };
    if (k > 0)
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), before);
    order.resize(k);
    std::sort(order.begin(), order.end());
    cache.indices = std::move(order);
    cache.values.reserve(k);
    for (auto i : cache.indices)
        cache.values.push_back(d[i]);
    return cache;
}

template <typename Real> void validate(const ActivationCache<Real> &cache) {
    if (cache.indices.size() != cache.values.size())
        throw CorruptCacheError("activation cache: index/value count mismatch");
    const std::size_t n = cache.element_count();
    for (std::size_t e = 0; e < cache.indices.size(); ++e) {
        if (cache.indices[e] >= n)
            throw CorruptCacheError("activation cache: index " + std::to_string(cache.indices[e]) + " out of range");
        if (e > 0 && cache.indices[e] <= cache.indices[e - 1])
            throw CorruptCacheError("activation cache: indices not strictly ascending");
    }
}

template <typename Real> nn::Tensor4D<Real> densify(const ActivationCache<Real> &cache) {
    validate(cache);
    nn::Tensor4D<Real> out(cache.dims);
    for (std::size_t e = 0; e < cache.indices.size(); ++e)
        out.data[cache.indices[e]] = cache.values[e];
    return out;
}

std::uint64_t dense_cache_bits(std::size_t n, unsigned value_bits, bool sign_bitmap) {
    return static_cast<std::uint64_t>(n) * value_bits + (sign_bitmap ? n : 0);
}

template <typename Real>
std::uint64_t cache_storage_bits(const ActivationCache<Real> &cache, unsigned value_bits, bool sign_bitmap) {
    const std::size_t n = cache.element_count();
    if (n == 0)
        return 0;
    const std::size_t nnz = cache.kept();
    const std::size_t rows = cache.dims.n * cache.dims.c * cache.dims.h;
    const std::size_t cols = cache.dims.w;
    const double density = static_cast<double>(nnz) / static_cast<double>(n);
    const auto scheme = sparse::select_scheme(density, rows, cols, nnz);
    return sparse::storage_bits(n, nnz, value_bits, scheme, rows, cols) + (sign_bitmap ? n : 0);
}

template struct ActivationCache<float>;
template struct ActivationCache<double>;
template ActivationCache<float> prune_activation<float>(const nn::Tensor4D<float> &, double);
template ActivationCache<double> prune_activation<double>(const nn::Tensor4D<double> &, double);
template nn::Tensor4D<float> densify<float>(const ActivationCache<float> &);
template nn::Tensor4D<double> densify<double>(const ActivationCache<double> &);
template void validate<float>(const ActivationCache<float> &);
template void validate<double>(const ActivationCache<double> &);
template std::uint64_t cache_storage_bits<float>(const ActivationCache<float> &, unsigned, bool);
template std::uint64_t cache_storage_bits<double>(const ActivationCache<double> &, unsigned, bool);

} // namespace fedmef::sap
