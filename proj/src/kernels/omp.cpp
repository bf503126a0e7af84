#include "fedmef/kernels/conv.hpp"

#include "kernel_bodies.hpp"

namespace fedmef::kernels::omp {

template <typename R>
void conv_forward(const ConvGeometry &g, std::span<const R> x, std::span<const R> w, std::span<R> y) {
    const auto total = static_cast<std::ptrdiff_t>(g.batch * g.out_channels);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < total; ++j) {
        const auto u = static_cast<std::size_t>(j);
        detail::conv_forward_slice<R>(g, x, w, y, u / g.out_channels, u % g.out_channels);
    }
}

template <typename R>
void conv_backward_input(const ConvGeometry &g, std::span<const R> dy, std::span<const R> w, std::span<R> dx) {
    const auto total = static_cast<std::ptrdiff_t>(g.batch * g.in_channels);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < total; ++j) {
        const auto u = static_cast<std::size_t>(j);
        detail::conv_backward_input_slice<R>(g, dy, w, dx, u / g.in_channels, u % g.in_channels);
    }
}

template <typename R>
void conv_backward_weight(const ConvGeometry &g, std::span<const R> dy, std::span<const R> x, std::span<R> dw) {
    const auto total = static_cast<std::ptrdiff_t>(g.out_channels);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t co = 0; co < total; ++co)
        detail::conv_backward_weight_slice<R>(g, dy, x, dw, static_cast<std::size_t>(co));
}

template <typename R>
void conv_backward_weight_sparse(const ConvGeometry &g, std::span<const R> dy, std::span<const std::uint32_t> idx,
                                 std::span<const R> val, std::span<R> dw) {
    const auto total = static_cast<std::ptrdiff_t>(g.out_channels);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t co = 0; co < total; ++co)
        detail::conv_backward_weight_sparse_slice<R>(g, dy, idx, val, dw, static_cast<std::size_t>(co));
}

template <typename R>
void linear_forward(std::size_t batch, std::size_t in, std::size_t out, std::span<const R> x, std::span<const R> w,
                    std::span<const R> bias, std::span<R> y) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(batch); ++n)
        detail::linear_forward_row<R>(in, out, x, w, bias, y, static_cast<std::size_t>(n));
}

template <typename R>
void linear_backward_input(std::size_t batch, std::size_t in, std::size_t out, std::span<const R> dy,
                           std::span<const R> w, std::span<R> dx) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(batch); ++n)
        detail::linear_backward_input_row<R>(in, out, dy, w, dx, static_cast<std::size_t>(n));
}

template <typename R>
void linear_backward_weight(std::size_t batch, std::size_t in, std::size_t out, std::span<const R> dy,
                            std::span<const R> x, std::span<R> dw, std::span<R> dbias) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(out); ++o)
        detail::linear_backward_weight_row<R>(batch, in, out, dy, x, dw, dbias, static_cast<std::size_t>(o));
}

template <typename R>
void linear_backward_weight_sparse(std::size_t batch, std::size_t in, std::size_t out, std::span<const R> dy,
                                   std::span<const std::uint32_t> idx, std::span<const R> val, std::span<R> dw,
                                   std::span<R> dbias) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(out); ++o)
        detail::linear_backward_weight_sparse_row<R>(batch, in, out, dy, idx, val, dw, dbias,
                                                     static_cast<std::size_t>(o));
}

} // namespace fedmef::kernels::omp

#include "instantiate.inc"
INSTANTIATE_KERNELS(omp)
