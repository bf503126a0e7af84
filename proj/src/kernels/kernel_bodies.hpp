#pragma once

// Per-outer-index loop bodies shared by the serial and OpenMP kernels. Each body writes a
// disjoint slice of the output, so the outer loop can be split across threads without
// changing any accumulation order.

#include "fedmef/kernels/conv.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>

namespace fedmef::kernels::detail {

// Maps an input coordinate and kernel tap to the output coordinate it feeds, if any.
inline bool output_coord(std::size_t in, std::size_t tap, const ConvGeometry &g, std::size_t out_extent,
                         std::size_t &out) noexcept {
    const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(in + g.padding) - static_cast<std::ptrdiff_t>(tap);
    if (t < 0 || t % static_cast<std::ptrdiff_t>(g.stride) != 0)
        return false;
    out = static_cast<std::size_t>(t) / g.stride;
    return out < out_extent;
}

// Output rows [lo, hi) whose tap `tap` lands inside an input of extent `in`.
inline void valid_range(std::size_t tap, std::size_t in, std::size_t out_extent, const ConvGeometry &g,
                        std::size_t &lo, std::size_t &hi) noexcept {
    lo = tap >= g.padding ? 0 : (g.padding - tap + g.stride - 1) / g.stride;
    const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(in + g.padding) - 1 - static_cast<std::ptrdiff_t>(tap);
    hi = last < 0 ? 0 : std::min(out_extent, static_cast<std::size_t>(last) / g.stride + 1);
    if (hi < lo)
        hi = lo;
}

// y[n, co, :, :]. Taps outermost; pruned (zero) taps are skipped.
template <typename R>
inline void conv_forward_slice(const ConvGeometry &g, std::span<const R> x, std::span<const R> w, std::span<R> y,
                               std::size_t n, std::size_t co) {
    const std::size_t k = g.kernel;
    R *out = y.data() + (n * g.out_channels + co) * g.out_h * g.out_w;
    for (std::size_t j = 0; j < g.out_h * g.out_w; ++j)
        out[j] = R{0};
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        const R *xin = x.data() + (n * g.in_channels + ci) * g.in_h * g.in_w;
        const R *wk = w.data() + (co * g.in_channels + ci) * k * k;
        for (std::size_t kh = 0; kh < k; ++kh) {
            std::size_t oy0, oy1;
            valid_range(kh, g.in_h, g.out_h, g, oy0, oy1);
            for (std::size_t kw = 0; kw < k; ++kw) {
                const R wv = wk[kh * k + kw];
                if (wv == R{0})
                    continue;
                std::size_t ox0, ox1;
                valid_range(kw, g.in_w, g.out_w, g, ox0, ox1);
                const std::size_t len = ox1 - ox0;
                for (std::size_t oy = oy0; oy < oy1; ++oy) {
                    const R *xr = xin + (oy * g.stride + kh - g.padding) * g.in_w + (ox0 * g.stride + kw - g.padding);
                    R *yr = out + oy * g.out_w + ox0;
                    if (g.stride == 1) {
                        for (std::size_t j = 0; j < len; ++j)
                            yr[j] += wv * xr[j];
                    } else {
                        for (std::size_t j = 0; j < len; ++j)
                            yr[j] += wv * xr[j * g.stride];
                    }
                }
            }
        }
    }
}

// dx[n, ci, :, :]. Scatter form of the forward loop.
template <typename R>
inline void conv_backward_input_slice(const ConvGeometry &g, std::span<const R> dy, std::span<const R> w,
                                      std::span<R> dx, std::size_t n, std::size_t ci) {
    const std::size_t k = g.kernel;
    R *out = dx.data() + (n * g.in_channels + ci) * g.in_h * g.in_w;
    for (std::size_t j = 0; j < g.in_h * g.in_w; ++j)
        out[j] = R{0};
    for (std::size_t co = 0; co < g.out_channels; ++co) {
        const R *d = dy.data() + (n * g.out_channels + co) * g.out_h * g.out_w;
        const R *wk = w.data() + (co * g.in_channels + ci) * k * k;
        for (std::size_t kh = 0; kh < k; ++kh) {
            std::size_t oy0, oy1;
            valid_range(kh, g.in_h, g.out_h, g, oy0, oy1);
            for (std::size_t kw = 0; kw < k; ++kw) {
                const R wv = wk[kh * k + kw];
                if (wv == R{0})
                    continue;
                std::size_t ox0, ox1;
                valid_range(kw, g.in_w, g.out_w, g, ox0, ox1);
                const std::size_t len = ox1 - ox0;
                for (std::size_t oy = oy0; oy < oy1; ++oy) {
                    R *xr = out + (oy * g.stride + kh - g.padding) * g.in_w + (ox0 * g.stride + kw - g.padding);
                    const R *dr = d + oy * g.out_w + ox0;
                    if (g.stride == 1) {
                        for (std::size_t j = 0; j < len; ++j)
                            xr[j] += wv * dr[j];
                    } else {
                        for (std::size_t j = 0; j < len; ++j)
                            xr[j * g.stride] += wv * dr[j];
                    }
                }
            }
        }
    }
}

// dw[co, :, :, :]
template <typename R>
inline void conv_backward_weight_slice(const ConvGeometry &g, std::span<const R> dy, std::span<const R> x,
                                       std::span<R> dw, std::size_t co) {
    const std::size_t k = g.kernel;
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        for (std::size_t kh = 0; kh < k; ++kh) {
            for (std::size_t kw = 0; kw < k; ++kw) {
                std::size_t oy0, oy1, ox0, ox1;
                valid_range(kh, g.in_h, g.out_h, g, oy0, oy1);
                valid_range(kw, g.in_w, g.out_w, g, ox0, ox1);
                const std::size_t len = ox1 - ox0;
                R acc{0};
                for (std::size_t n = 0; n < g.batch; ++n) {
                    const R *d = dy.data() + (n * g.out_channels + co) * g.out_h * g.out_w;
                    const R *xin = x.data() + (n * g.in_channels + ci) * g.in_h * g.in_w;
                    for (std::size_t oy = oy0; oy < oy1; ++oy) {
                        const R *dr = d + oy * g.out_w + ox0;
                        const R *xr = xin + (oy * g.stride + kh - g.padding) * g.in_w + (ox0 * g.stride + kw - g.padding);
                        if (g.stride == 1) {
                            for (std::size_t j = 0; j < len; ++j)
                                acc += dr[j] * xr[j];
                        } else {
                            for (std::size_t j = 0; j < len; ++j)
                                acc += dr[j] * xr[j * g.stride];
                        }
                    }
                }
                dw[((co * g.in_channels + ci) * k + kh) * k + kw] = acc;
            }
        }
    }
}

// dw[co, :, :, :] from a sparse input cache (flat NCHW indices, ascending).
template <typename R>
inline void conv_backward_weight_sparse_slice(const ConvGeometry &g, std::span<const R> dy,
                                              std::span<const std::uint32_t> idx, std::span<const R> val,
                                              std::span<R> dw, std::size_t co) {
    const std::size_t k = g.kernel;
    R *out = dw.data() + co * g.in_channels * k * k;
    for (std::size_t j = 0; j < g.in_channels * k * k; ++j)
        out[j] = R{0};
    const std::size_t plane = g.in_h * g.in_w;
    for (std::size_t e = 0; e < idx.size(); ++e) {
        const std::size_t flat = idx[e];
        const std::size_t n = flat / (g.in_channels * plane);
        const std::size_t ci = (flat / plane) % g.in_channels;
        const std::size_t iy = (flat / g.in_w) % g.in_h;
        const std::size_t ix = flat % g.in_w;
        const R v = val[e];
        const R *d = dy.data() + (n * g.out_channels + co) * g.out_h * g.out_w;
        for (std::size_t kh = 0; kh < k; ++kh) {
            std::size_t oy;
            if (!output_coord(iy, kh, g, g.out_h, oy))
                continue;
            for (std::size_t kw = 0; kw < k; ++kw) {
                std::size_t ox;
                if (!output_coord(ix, kw, g, g.out_w, ox))
                    continue;
                out[(ci * k + kh) * k + kw] += d[oy * g.out_w + ox] * v;
            }
        }
    }
}

template <typename R>
inline void linear_forward_row(std::size_t in, std::size_t out, std::span<const R> x, std::span<const R> w,
                               std::span<const R> bias, std::span<R> y, std::size_t n) {
    for (std::size_t o = 0; o < out; ++o) {
        R acc = bias.empty() ? R{0} : bias[o];
        const R *wr = w.data() + o * in;
        const R *xr = x.data() + n * in;
        for (std::size_t i = 0; i < in; ++i)
            acc += wr[i] * xr[i];
        y[n * out + o] = acc;
    }
}

template <typename R>
inline void linear_backward_input_row(std::size_t in, std::size_t out, std::span<const R> dy, std::span<const R> w,
                                      std::span<R> dx, std::size_t n) {
    for (std::size_t i = 0; i < in; ++i) {
        R acc{0};
        for (std::size_t o = 0; o < out; ++o)
            acc += dy[n * out + o] * w[o * in + i];
        dx[n * in + i] = acc;
    }
}

template <typename R>
inline void linear_backward_weight_row(std::size_t batch, std::size_t in, std::size_t out, std::span<const R> dy,
                                       std::span<const R> x, std::span<R> dw, std::span<R> dbias, std::size_t o) {
    for (std::size_t i = 0; i < in; ++i) {
        R acc{0};
        for (std::size_t n = 0; n < batch; ++n)
            acc += dy[n * out + o] * x[n * in + i];
        dw[o * in + i] = acc;
    }
    if (!dbias.empty()) {
        R acc{0};
        for (std::size_t n = 0; n < batch; ++n)
            acc += dy[n * out + o];
        dbias[o] = acc;
    }
}

template <typename R>
inline void linear_backward_weight_sparse_row(std::size_t batch, std::size_t in, std::size_t out,
                                              std::span<const R> dy, std::span<const std::uint32_t> idx,
                                              std::span<const R> val, std::span<R> dw, std::span<R> dbias,
                                              std::size_t o) {
    R *row = dw.data() + o * in;
    for (std::size_t i = 0; i < in; ++i)
        row[i] = R{0};
    for (std::size_t e = 0; e < idx.size(); ++e) {
        const std::size_t n = idx[e] / in;
        row[idx[e] % in] += dy[n * out + o] * val[e];
    }
    if (!dbias.empty()) {
        R acc{0};
        for (std::size_t n = 0; n < batch; ++n)
            acc += dy[n * out + o];
        dbias[o] = acc;
    }
}

} // namespace fedmef::kernels::detail
