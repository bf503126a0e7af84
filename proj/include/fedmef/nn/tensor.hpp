#pragma once

#include "fedmef/errors.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

namespace fedmef::nn {

struct Dims4 {
    std::size_t n = 0, c = 0, h = 0, w = 0;
    std::size_t count() const noexcept { return n * c * h * w; }
    friend bool operator==(const Dims4 &, const Dims4 &) = default;
};

/// NCHW activation tensor.
template <typename Real> struct Tensor4D {
    Dims4 dims;
    std::vector<Real> data;

    Tensor4D() = default;
    explicit Tensor4D(Dims4 d, Real fill = Real{0}) : dims(d), data(d.count(), fill) {}
    Tensor4D(Dims4 d, std::vector<Real> values) : dims(d), data(std::move(values)) {
        if (data.size() != dims.count())
            throw InvalidArgument("Tensor4D: value count does not match dims");
    }

    std::size_t size() const noexcept { return data.size(); }

    Real &at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data[((n * dims.c + c) * dims.h + h) * dims.w + w];
    }
    Real at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data[((n * dims.c + c) * dims.h + h) * dims.w + w];
    }

    bool all_finite() const noexcept {
        for (auto v : data)
            if (!std::isfinite(v))
                return false;
        return true;
    }

    template <typename U> Tensor4D<U> cast() const { return Tensor4D<U>(dims, std::vector<U>(data.begin(), data.end())); }
};

} // namespace fedmef::nn
