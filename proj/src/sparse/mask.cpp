#include "fedmef/sparse/mask.hpp"

#include "fedmef/errors.hpp"
#include "fedmef/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedmef::sparse {

std::size_t element_count(const Shape &shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Mask::Mask(Shape shape, bool fill)
    : shape_(std::move(shape)), bits_(element_count(shape_), fill ? 1 : 0) {}

Mask::Mask(Shape shape, std::vector<std::uint8_t> bits) : shape_(std::move(shape)), bits_(std::move(bits)) {
    if (bits_.size() != element_count(shape_))
        throw InvalidArgument("Mask: bit count does not match shape");
    for (auto &b : bits_)
        b = b ? 1 : 0;
}

std::size_t Mask::count_kept() const noexcept {
    std::size_t n = 0;
    for (auto b : bits_)
        n += b;
    return n;
}

double Mask::density() const noexcept {
    if (bits_.empty())
        return 0.0;
    return static_cast<double>(count_kept()) / static_cast<double>(bits_.size());
}

double Mask::sparsity() const noexcept {
    if (bits_.empty())
        return 0.0;
    return static_cast<double>(count_pruned()) / static_cast<double>(bits_.size());
}

std::vector<std::size_t> Mask::kept_indices() const {
    std::vector<std::size_t> out;
    out.reserve(count_kept());
    for (std::size_t i = 0; i < bits_.size(); ++i)
        if (bits_[i])
            out.push_back(i);
    return out;
}

std::vector<std::size_t> Mask::pruned_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bits_.size(); ++i)
        if (!bits_[i])
            out.push_back(i);
    return out;
}

namespace {

std::size_t pruned_count(std::size_t n, double target_sparsity) {
    if (!(target_sparsity >= 0.0 && target_sparsity < 1.0))
        throw InvalidArgument("target sparsity must lie in [0, 1)");
    return static_cast<std::size_t>(std::llround(target_sparsity * static_cast<double>(n)));
}

} // namespace

Mask random_prune(const Shape &shape, double target_sparsity, std::uint64_t seed) {
    Mask mask(shape, true);
    const std::size_t n = mask.size();
    const std::size_t cleared = pruned_count(n, target_sparsity);

    // partial Fisher-Yates: the first `cleared` slots are a uniform sample without replacement
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < cleared; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
        std::swap(order[i], order[j]);
        mask.set(order[i], false);
    }
    return mask;
}

Mask magnitude_prune(const Shape &shape, const std::vector<float> &values, double target_sparsity) {
    Mask mask(shape, true);
    const std::size_t n = mask.size();
    if (values.size() != n)
        throw InvalidArgument("magnitude_prune: value count does not match shape");
    const std::size_t cleared = pruned_count(n, target_sparsity);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // smallest magnitude first, higher index first among ties so lower indices survive
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const float ma = std::fabs(values[a]), mb = std::fabs(values[b]);
        return ma != mb ? ma < mb : a > b;
    });
    for (std::size_t i = 0; i < cleared; ++i)
        mask.set(order[i], false);
    return mask;
}

} // namespace fedmef::sparse
