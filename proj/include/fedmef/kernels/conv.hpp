#pragma once

// Data-parallel compute kernels. Each operation has a serial reference and an OpenMP variant.
// Both variants accumulate every output element in the same order, so results are
// bit-identical; the serial one is kept as the reference for tests and benchmarks.

#include <cstddef>
#include <cstdint>
#include <span>

namespace fedmef::kernels {

enum class Backend { Serial, OpenMP };

struct ConvGeometry {
    std::size_t batch = 0;
    std::size_t in_channels = 0, in_h = 0, in_w = 0;
    std::size_t out_channels = 0, out_h = 0, out_w = 0;
    std::size_t kernel = 1, stride = 1, padding = 0;

    std::size_t input_size() const noexcept { return batch * in_channels * in_h * in_w; }
    std::size_t output_size() const noexcept { return batch * out_channels * out_h * out_w; }
    std::size_t weight_size() const noexcept { return out_channels * in_channels * kernel * kernel; }
};

/// Output spatial extent of a convolution; 0 when the kernel does not fit.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) noexcept;

#define FEDMEF_KERNEL_DECLS                                                                                  \
    template <typename R>                                                                                     \
    void conv_forward(const ConvGeometry &g, std::span<const R> x, std::span<const R> w, std::span<R> y);     \
    template <typename R>                                                                                     \
    void conv_backward_input(const ConvGeometry &g, std::span<const R> dy, std::span<const R> w,              \
                             std::span<R> dx);                                                                \
    template <typename R>                                                                                     \
    void conv_backward_weight(const ConvGeometry &g, std::span<const R> dy, std::span<const R> x,             \
                              std::span<R> dw);                                                               \
    template <typename R>                                                                                     \
    void conv_backward_weight_sparse(const ConvGeometry &g, std::span<const R> dy,                            \
                                     std::span<const std::uint32_t> x_index, std::span<const R> x_value,      \
                                     std::span<R> dw);                                                        \
    template <typename R>                                                                                     \
    void linear_forward(std::size_t batch, std::size_t in, std::size_t out, std::span<const R> x,             \
                        std::span<const R> w, std::span<const R> bias, std::span<R> y);                       \
    template <typename R>                                                                                     \
    void linear_backward_input(std::size_t batch, std::size_t in, std::size_t out, std::span<const R> dy,     \
                               std::span<const R> w, std::span<R> dx);                                        \
    template <typename R>                                                                                     \
    void linear_backward_weight(std::size_t batch, std::size_t in, std::size_t out, std::span<const R> dy,    \
                                std::span<const R> x, std::span<R> dw, std::span<R> dbias);                   \
    template <typename R>                                                                                     \
    void linear_backward_weight_sparse(std::size_t batch, std::size_t in, std::size_t out,                    \
                                       std::span<const R> dy, std::span<const std::uint32_t> x_index,         \
                                       std::span<const R> x_value, std::span<R> dw, std::span<R> dbias);

namespace serial {
FEDMEF_KERNEL_DECLS
}
namespace omp {
FEDMEF_KERNEL_DECLS
}

#undef FEDMEF_KERNEL_DECLS

// Backend dispatch.

template <typename R>
void conv_forward(Backend b, const ConvGeometry &g, std::span<const R> x, std::span<const R> w, std::span<R> y) {
    b == Backend::OpenMP ? omp::conv_forward<R>(g, x, w, y) : serial::conv_forward<R>(g, x, w, y);
}

template <typename R>
void conv_backward_input(Backend b, const ConvGeometry &g, std::span<const R> dy, std::span<const R> w,
                         std::span<R> dx) {
    b == Backend::OpenMP ? omp::conv_backward_input<R>(g, dy, w, dx) : serial::conv_backward_input<R>(g, dy, w, dx);
}

template <typename R>
void conv_backward_weight(Backend b, const ConvGeometry &g, std::span<const R> dy, std::span<const R> x,
                          std::span<R> dw) {
    b == Backend::OpenMP ? omp::conv_backward_weight<R>(g, dy, x, dw) : serial::conv_backward_weight<R>(g, dy, x, dw);
}

template <typename R>
void conv_backward_weight_sparse(Backend b, const ConvGeometry &g, std::span<const R> dy,
                                 std::span<const std::uint32_t> idx, std::span<const R> val, std::span<R> dw) {
    b == Backend::OpenMP ? omp::conv_backward_weight_sparse<R>(g, dy, idx, val, dw)
                         : serial::conv_backward_weight_sparse<R>(g, dy, idx, val, dw);
}

template <typename R>
void linear_forward(Backend b, std::size_t batch, std::size_t in, std::size_t out, std::span<const R> x,
                    std::span<const R> w, std::span<const R> bias, std::span<R> y) {
    b == Backend::OpenMP ? omp::linear_forward<R>(batch, in, out, x, w, bias, y)
                         : serial::linear_forward<R>(batch, in, out, x, w, bias, y);
}

template <typename R>
void linear_backward_input(Backend b, std::size_t batch, std::size_t in, std::size_t out, std::span<const R> dy,
                           std::span<const R> w, std::span<R> dx) {
    b == Backend::OpenMP ? omp::linear_backward_input<R>(batch, in, out, dy, w, dx)
                         : serial::linear_backward_input<R>(batch, in, out, dy, w, dx);
}

template <typename R>
void linear_backward_weight(Backend b, std::size_t batch, std::size_t in, std::size_t out, std::span<const R> dy,
                            std::span<const R> x, std::span<R> dw, std::span<R> dbias) {
    b == Backend::OpenMP ? omp::linear_backward_weight<R>(batch, in, out, dy, x, dw, dbias)
                         : serial::linear_backward_weight<R>(batch, in, out, dy, x, dw, dbias);
}

template <typename R>
void linear_backward_weight_sparse(Backend b, std::size_t batch, std::size_t in, std::size_t out,
                                   std::span<const R> dy, std::span<const std::uint32_t> idx,
                                   std::span<const R> val, std::span<R> dw, std::span<R> dbias) {
    b == Backend::OpenMP ? omp::linear_backward_weight_sparse<R>(batch, in, out, dy, idx, val, dw, dbias)
                         : serial::linear_backward_weight_sparse<R>(batch, in, out, dy, idx, val, dw, dbias);
}

} // namespace fedmef::kernels
