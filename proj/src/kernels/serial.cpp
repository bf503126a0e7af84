#include "fedmef/kernels/conv.hpp"

#include "kernel_bodies.hpp"

namespace fedmef::kernels {

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) noexcept {
    if (stride == 0 || in + 2 * padding < kernel)
        return 0;
    return (in + 2 * padding - kernel) / stride + 1;
}

namespace serial {

template <typename R>
void conv_forward(const ConvGeometry &g, std::span<const R> x, std::span<const R> w, std::span<R> y) {
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t co = 0; co < g.out_channels; ++co)
            detail::conv_forward_slice<R>(g, x, w, y, n, co);
}

template <typename R>
void conv_backward_input(const ConvGeometry &g, std::span<const R> dy, std::span<const R> w, std::span<R> dx) {
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            detail::conv_backward_input_slice<R>(g, dy, w, dx, n, ci);
}

template <typename R>
void conv_backward_weight(const ConvGeometry &g, std::span<const R> dy, std::span<const R> x, std::span<R> dw) {
    for (std::size_t co = 0; co < g.out_channels; ++co)
        detail::conv_backward_weight_slice<R>(g, dy, x, dw, co);
}

template <typename R>
void conv_backward_weight_sparse(const ConvGeometry &g, std::span<const R> dy, std::span<const std::uint32_t> idx,
                                 std::span<const R> val, std::span<R> dw) {
    for (std::size_t co = 0; co < g.out_channels; ++co)
        detail::conv_backward_weight_sparse_slice<R>(g, dy, idx, val, dw, co);
}

template <typename R>
void linear_forward(std::size_t batch, std::size_t in, std::size_t out, std::span<const R> x, std::span<const R> w,
                    std::span<const R> bias, std::span<R> y) {
    for (std::size_t n = 0; n < batch; ++n)
        detail::linear_forward_row<R>(in, out, x, w, bias, y, n);
}

template <typename R>
void linear_backward_input(std::size_t batch, std::size_t in, std::size_t out, std::span<const R> dy,
                           std::span<const R> w, std::span<R> dx) {
    for (std::size_t n = 0; n < batch; ++n)
        detail::linear_backward_input_row<R>(in, out, dy, w, dx, n);
}

template <typename R>
void linear_backward_weight(std::size_t batch, std::size_t in, std::size_t out, std::span<const R> dy,
                            std::span<const R> x, std::span<R> dw, std::span<R> dbias) {
    for (std::size_t o = 0; o < out; ++o)
        detail::linear_backward_weight_row<R>(batch, in, out, dy, x, dw, dbias, o);
}

template <typename R>
void linear_backward_weight_sparse(std::size_t batch, std::size_t in, std::size_t out, std::span<const R> dy,
                                   std::span<const std::uint32_t> idx, std::span<const R> val, std::span<R> dw,
                                   std::span<R> dbias) {
    for (std::size_t o = 0; o < out; ++o)
        detail::linear_backward_weight_sparse_row<R>(batch, in, out, dy, idx, val, dw, dbias, o);
}

} // namespace serial
} // namespace fedmef::kernels

#include "instantiate.inc"
INSTANTIATE_KERNELS(serial)
