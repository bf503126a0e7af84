#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fedmef::sparse {

using Shape = std::vector<std::size_t>;

/// Product of the dimensions; 1 for a rank-0 shape.
std::size_t element_count(const Shape &shape);

/// Binary keep-mask. A set bit marks an unpruned element.
class Mask {
public:
    Mask() = default;
    explicit Mask(Shape shape, bool fill = true);
    Mask(Shape shape, std::vector<std::uint8_t> bits);

    const Shape &shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool operator[](std::size_t i) const noexcept { return bits_[i] != 0; }
    void set(std::size_t i, bool keep) noexcept { bits_[i] = keep ? 1 : 0; }

    const std::vector<std::uint8_t> &bits() const noexcept { return bits_; }

    std::size_t count_kept() const noexcept;
    std::size_t count_pruned() const noexcept { return size() - count_kept(); }

    /// Fraction of zero bits; 0 for an empty mask.
    double sparsity() const noexcept;
    /// Kept over total, computed directly so it agrees with nnz / n everywhere.
    double density() const noexcept;

    std::vector<std::size_t> kept_indices() const;
    std::vector<std::size_t> pruned_indices() const;

    friend bool operator==(const Mask &, const Mask &) = default;

private:
    Shape shape_;
    std::vector<std::uint8_t> bits_;
};

/// Uniform random mask with exactly round(target_sparsity * n) cleared bits.
/// Throws InvalidArgument unless 0 <= target_sparsity < 1.
Mask random_prune(const Shape &shape, double target_sparsity, std::uint64_t seed);

/// Keeps the n - round(s*n) entries of largest |value| (ties: lower index kept).
Mask magnitude_prune(const Shape &shape, const std::vector<float> &values, double target_sparsity);

} // namespace fedmef::sparse
