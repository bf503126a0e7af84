#pragma once

#include "fedmef/errors.hpp"
#include "fedmef/sparse/mask.hpp"

#include <vector>

namespace fedmef::sparse {

/// Dense values paired with a keep-mask. Pruned entries hold exact zeros.
template <typename T> class BasicMaskedTensor {
public:
    using value_type = T;

    BasicMaskedTensor() = default;

    /// All-kept tensor of zeros.
    explicit BasicMaskedTensor(Shape shape) : mask_(std::move(shape), true), values_(mask_.size(), T{0}) {}

    /// Throws InvalidArgument if a pruned position carries a nonzero value.
    BasicMaskedTensor(std::vector<T> values, Mask mask) : mask_(std::move(mask)), values_(std::move(values)) {
        if (values_.size() != mask_.size())
            throw InvalidArgument("MaskedTensor: value count does not match mask");
        for (std::size_t i = 0; i < values_.size(); ++i)
            if (!mask_[i] && values_[i] != T{0})
                throw InvalidArgument("MaskedTensor: nonzero value at pruned position");
    }

    /// Builds the tensor, zeroing values at pruned positions.
    static BasicMaskedTensor masked(std::vector<T> values, Mask mask) {
        if (values.size() != mask.size())
            throw InvalidArgument("MaskedTensor: value count does not match mask");
        for (std::size_t i = 0; i < values.size(); ++i)
            if (!mask[i])
                values[i] = T{0};
        return BasicMaskedTensor(std::move(values), std::move(mask));
    }

    const Shape &shape() const noexcept { return mask_.shape(); }
    std::size_t size() const noexcept { return values_.size(); }

    const std::vector<T> &values() const noexcept { return values_; }
    const Mask &mask() const noexcept { return mask_; }

    T operator[](std::size_t i) const noexcept { return values_[i]; }

    /// Writes a value at an unpruned position; pruned positions are left at zero.
    void set(std::size_t i, T v) noexcept {
        if (mask_[i])
            values_[i] = v;
    }

    /// Raw access for kernels; callers must keep pruned entries at zero.
    std::vector<T> &mutable_values() noexcept { return values_; }

    /// Replaces the mask and zeroes newly pruned entries.
    void reset_mask(Mask mask) {
        if (mask.size() != values_.size())
            throw InvalidArgument("MaskedTensor: mask size mismatch");
        mask_ = std::move(mask);
        for (std::size_t i = 0; i < values_.size(); ++i)
            if (!mask_[i])
                values_[i] = T{0};
    }

    template <typename U> BasicMaskedTensor<U> cast() const {
        std::vector<U> v(values_.begin(), values_.end());
        return BasicMaskedTensor<U>(std::move(v), mask_);
    }

    friend bool operator==(const BasicMaskedTensor &, const BasicMaskedTensor &) = default;

private:
    Mask mask_;
    std::vector<T> values_;
};

using MaskedTensor = BasicMaskedTensor<float>;
using MaskedTensor64 = BasicMaskedTensor<double>;

} // namespace fedmef::sparse
