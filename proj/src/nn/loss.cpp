#include "fedmef/nn/loss.hpp"

#include "fedmef/errors.hpp"

#include <algorithm>
#include <cmath>

namespace fedmef::nn {

template <typename Real> LossResult<Real> loss_and_grad(const Tensor4D<Real> &logits, std::span<const int> labels) {
    const std::size_t batch = logits.dims.n;
    const std::size_t classes = logits.dims.c * logits.dims.h * logits.dims.w;
    if (labels.size() != batch)
        throw InvalidArgument("loss_and_grad: label count differs from batch size");
    if (batch == 0 || classes == 0)
        throw InvalidArgument("loss_and_grad: empty logits");

    LossResult<Real> r;
    r.grad = Tensor4D<Real>(logits.dims);
    const Real inv_batch = Real{1} / static_cast<Real>(batch);
    Real total{0};
    for (std::size_t n = 0; n < batch; ++n) {
        const int y = labels[n];
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw InvalidArgument("loss_and_grad: label " + std::to_string(y) + " out of range");
        const Real *z = logits.data.data() + n * classes;
        Real *g = r.grad.data.data() + n * classes;
        const Real zmax = *std::max_element(z, z + classes);
        Real denom{0};
        for (std::size_t c = 0; c < classes; ++c) {
            g[c] = std::exp(z[c] - zmax);
            denom += g[c];
        }
        const Real log_denom = std::log(denom);
        total += log_denom - (z[y] - zmax);
        for (std::size_t c = 0; c < classes; ++c)
            g[c] = (g[c] / denom - (static_cast<std::size_t>(y) == c ? Real{1} : Real{0})) * inv_batch;
    }
    r.loss = total * inv_batch;
    return r;
}

template <typename Real> std::vector<int> argmax(const Tensor4D<Real> &logits) {
    const std::size_t classes = logits.dims.c * logits.dims.h * logits.dims.w;
    std::vector<int> out(logits.dims.n);
    for (std::size_t n = 0; n < logits.dims.n; ++n) {
        const Real *z = logits.data.data() + n * classes;
        out[n] = static_cast<int>(std::max_element(z, z + classes) - z);
    }
    return out;
}

template LossResult<float> loss_and_grad<float>(const Tensor4D<float> &, std::span<const int>);
template LossResult<double> loss_and_grad<double>(const Tensor4D<double> &, std::span<const int>);
template std::vector<int> argmax<float>(const Tensor4D<float> &);
template std::vector<int> argmax<double>(const Tensor4D<double> &);

} // namespace fedmef::nn
