#include "fedmef/nn/network.hpp"

#include "fedmef/errors.hpp"

#include <algorithm>

namespace fedmef::nn {

namespace {

kernels::ConvGeometry geometry(const LayerSpec &l, const Dims4 &in, const Dims4 &out) {
    kernels::ConvGeometry g;
    g.batch = in.n;
    g.in_channels = in.c;
    g.in_h = in.h;
    g.in_w = in.w;
    g.out_channels = out.c;
    g.out_h = out.h;
    g.out_w = out.w;
    g.kernel = l.kernel_size;
    g.stride = l.stride;
    g.padding = l.padding;
    return g;
}

template <typename Real> void require_finite(const Tensor4D<Real> &t, std::size_t layer) {
    if (!t.all_finite())
        throw NonFiniteError("non-finite activation after layer " + std::to_string(layer));
}

template <typename Real> std::span<const Real> cspan(const std::vector<Real> &v) { return {v.data(), v.size()}; }
template <typename Real> std::span<Real> mspan(std::vector<Real> &v) { return {v.data(), v.size()}; }

template <typename Real>
void effective_weights(const LayerSpec &l, const sparse::BasicMaskedTensor<Real> &w, LayerTrace<Real> &lt) {
    lt.effective_weights.assign(w.size(), Real{0});
    if (l.kind == LayerKind::Conv && l.nsconv) {
        standardize_filters(w, l.out_channels, l.in_channels, l.gamma, mspan(lt.effective_weights), lt.filter_stats);
    } else {
        lt.effective_weights = w.values();
    }
}

template <typename Real>
Tensor4D<Real> run_layers(const BasicSparseModel<Real> &model, const Tensor4D<Real> &input,
                          const ForwardOptions &options, ForwardTrace<Real> *trace) {
    const auto &mi = model.input;
    if (input.dims.c != mi.c || input.dims.h != mi.h || input.dims.w != mi.w || input.dims.n == 0)
        throw InvalidArgument("forward: input dims do not match the model input shape");
    require_finite(input, 0);

    const auto shapes = infer_shapes(model.layers, model.input);
    Tensor4D<Real> cur = input;
    std::size_t k = 0;
    if (trace) {
        trace->batch = input.dims.n;
        trace->kinds.clear();
        trace->layers.clear();
        trace->bits = {};
        trace->cache_records.clear();
    }
    const unsigned b = options.value_bits;

    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const auto &l = model.layers[i];
        const Dims4 out_dims{cur.dims.n, shapes[i].c, shapes[i].h, shapes[i].w};
        LayerTrace<Real> lt;
        lt.kind = l.kind;
        lt.in_dims = cur.dims;
        lt.out_dims = out_dims;
        Tensor4D<Real> next(out_dims);

        switch (l.kind) {
        case LayerKind::Conv:
        case LayerKind::Linear: {
            const auto &w = model.weights[k];
            effective_weights(l, w, lt);
            if (l.kind == LayerKind::Conv) {
                kernels::conv_forward<Real>(options.backend, geometry(l, cur.dims, out_dims), cspan(cur.data),
                                            cspan(lt.effective_weights), mspan(next.data));
            } else {
                kernels::linear_forward<Real>(options.backend, cur.dims.n, l.in_features, l.out_features,
                                              cspan(cur.data), cspan(lt.effective_weights), cspan(model.biases[k]),
                                              mspan(next.data));
            }
            if (trace) {
                const std::size_t n = cur.size();
                CacheRecord rec;
                rec.layer = i;
                rec.dense_bits = sap::dense_cache_bits(n, b, false);
                if (options.sap.enabled_for(k)) {
                    auto cache = sap::prune_activation(cur, options.sap.target_sparsity);
                    rec.cache_bits = sap::cache_storage_bits(cache, b, false);
                    rec.achieved_sparsity = cache.sparsity();
                    lt.input = std::move(cache);
                } else {
                    rec.cache_bits = rec.dense_bits;
                    lt.input = cur;
                }
                trace->bits.cached += rec.cache_bits;
                trace->bits.dense += rec.dense_bits;
                trace->cache_records.push_back(rec);
            }
            ++k;
            break;
        }
        case LayerKind::ReLU: {
            if (trace)
                lt.relu_sign.resize(cur.size());
            for (std::size_t j = 0; j < cur.size(); ++j) {
                const bool pos = cur.data[j] > Real{0};
                next.data[j] = pos ? cur.data[j] : Real{0};
                if (trace)
                    lt.relu_sign[j] = pos;
            }
            if (trace) {
                trace->bits.cached += cur.size();
                trace->bits.dense += cur.size();
                trace->bits.sign += cur.size();
            }
            break;
        }
        case LayerKind::AvgPool: {
            const std::size_t win = l.window;
            const Real inv = Real{1} / static_cast<Real>(win * win);
            for (std::size_t n = 0; n < out_dims.n; ++n)
                for (std::size_t c = 0; c < out_dims.c; ++c)
                    for (std::size_t y = 0; y < out_dims.h; ++y)
                        for (std::size_t x = 0; x < out_dims.w; ++x) {
                            Real acc{0};
                            for (std::size_t dy = 0; dy < win; ++dy)
                                for (std::size_t dx = 0; dx < win; ++dx)
                                    acc += cur.at(n, c, y * win + dy, x * win + dx);
                            next.at(n, c, y, x) = acc * inv;
                        }
            break;
        }
        case LayerKind::Flatten: next.data = cur.data; break;
        }
        require_finite(next, i);
        if (trace) {
            trace->kinds.push_back(l.kind);
            trace->layers.push_back(std::move(lt));
        }
        cur = std::move(next);
    }
    return cur;
}

} // namespace

template <typename Real>
ForwardResult<Real> forward(const BasicSparseModel<Real> &model, const Tensor4D<Real> &input,
                            const ForwardOptions &options) {
    ForwardResult<Real> r;
    r.output = run_layers(model, input, options, &r.trace);
    return r;
}

template <typename Real>
Tensor4D<Real> predict(const BasicSparseModel<Real> &model, const Tensor4D<Real> &input, kernels::Backend backend) {
    ForwardOptions opt;
    opt.backend = backend;
    return run_layers<Real>(model, input, opt, nullptr);
}

template <typename Real>
GradientSet<Real> backward(const BasicSparseModel<Real> &model, const ForwardTrace<Real> &trace,
                           const Tensor4D<Real> &output_grad, const BackwardOptions &options) {
    if (trace.layers.size() != model.layers.size() || trace.kinds.size() != model.layers.size())
        throw TraceMismatchError("backward: trace layer count differs from the model");
    for (std::size_t i = 0; i < model.layers.size(); ++i)
        if (trace.kinds[i] != model.layers[i].kind)
            throw TraceMismatchError("backward: layer " + std::to_string(i) + " kind differs from the trace");
    if (trace.layers.empty() || !(trace.layers.back().out_dims == output_grad.dims))
        throw TraceMismatchError("backward: output gradient dims differ from the traced output");

    GradientSet<Real> gs;
    gs.weights.resize(model.weights.size());
    gs.biases.resize(model.weights.size());
    Tensor4D<Real> grad = output_grad;
    std::size_t k = model.weights.size();
    const std::size_t first_weighted = model.weighted.empty() ? 0 : model.weighted.front();

    for (std::size_t ii = model.layers.size(); ii-- > 0;) {
        const auto &l = model.layers[ii];
        const auto &lt = trace.layers[ii];
        const bool need_dx = options.input_grad || ii > first_weighted;
        Tensor4D<Real> dx(need_dx ? lt.in_dims : Dims4{});

        switch (l.kind) {
        case LayerKind::Conv:
        case LayerKind::Linear: {
            --k;
            const auto &w = model.weights[k];
            if (lt.effective_weights.size() != w.size())
                throw TraceMismatchError("backward: traced weights differ in size from the model");
            std::vector<Real> d_eff(w.size(), Real{0});
            std::vector<Real> &db = gs.biases[k];
            db.assign(model.biases[k].size(), Real{0});

            if (l.kind == LayerKind::Conv) {
                const auto g = geometry(l, lt.in_dims, lt.out_dims);
                if (const auto *dense = std::get_if<Tensor4D<Real>>(&lt.input)) {
                    kernels::conv_backward_weight<Real>(options.backend, g, cspan(grad.data), cspan(dense->data),
                                                        mspan(d_eff));
                } else if (const auto *cache = std::get_if<sap::ActivationCache<Real>>(&lt.input)) {
                    sap::validate(*cache);
                    kernels::conv_backward_weight_sparse<Real>(options.backend, g, cspan(grad.data),
                                                               {cache->indices.data(), cache->indices.size()},
                                                               cspan(cache->values), mspan(d_eff));
                } else {
                    throw TraceMismatchError("backward: conv layer has no cached input");
                }
                if (need_dx)
                    kernels::conv_backward_input<Real>(options.backend, g, cspan(grad.data),
                                                       cspan(lt.effective_weights), mspan(dx.data));
            } else {
                const std::size_t batch = lt.in_dims.n;
                if (const auto *dense = std::get_if<Tensor4D<Real>>(&lt.input)) {
                    kernels::linear_backward_weight<Real>(options.backend, batch, l.in_features, l.out_features,
                                                          cspan(grad.data), cspan(dense->data), mspan(d_eff),
                                                          mspan(db));
                } else if (const auto *cache = std::get_if<sap::ActivationCache<Real>>(&lt.input)) {
                    sap::validate(*cache);
                    kernels::linear_backward_weight_sparse<Real>(
                        options.backend, batch, l.in_features, l.out_features, cspan(grad.data),
                        {cache->indices.data(), cache->indices.size()}, cspan(cache->values), mspan(d_eff), mspan(db));
                } else {
                    throw TraceMismatchError("backward: linear layer has no cached input");
                }
                if (need_dx)
                    kernels::linear_backward_input<Real>(options.backend, batch, l.in_features, l.out_features,
                                                         cspan(grad.data), cspan(lt.effective_weights),
                                                         mspan(dx.data));
            }

            std::vector<Real> d_raw(w.size(), Real{0});
            const auto &mask = w.mask();
            if (l.kind == LayerKind::Conv && l.nsconv) {
                standardize_filters_backward<Real>(w, l.out_channels, l.in_channels, l.gamma,
                                                   cspan(lt.effective_weights), lt.filter_stats, cspan(d_eff),
                                                   mspan(d_raw));
            } else {
                for (std::size_t j = 0; j < w.size(); ++j)
                    if (mask[j])
                        d_raw[j] = d_eff[j];
            }
            if (options.dense_weight_grads)
                for (std::size_t j = 0; j < w.size(); ++j)
                    if (!mask[j])
                        d_raw[j] = d_eff[j];
            gs.weights[k] = std::move(d_raw);
            break;
        }
        case LayerKind::ReLU:
            if (lt.relu_sign.size() != grad.size())
                throw TraceMismatchError("backward: ReLU sign bitmap size mismatch");
            for (std::size_t j = 0; j < grad.size(); ++j)
                dx.data[j] = lt.relu_sign[j] ? grad.data[j] : Real{0};
            break;
        case LayerKind::AvgPool: {
            const std::size_t win = l.window;
            const Real inv = Real{1} / static_cast<Real>(win * win);
            const auto &od = lt.out_dims;
            for (std::size_t n = 0; n < od.n; ++n)
                for (std::size_t c = 0; c < od.c; ++c)
                    for (std::size_t y = 0; y < od.h; ++y)
                        for (std::size_t x = 0; x < od.w; ++x) {
                            const Real g = grad.at(n, c, y, x) * inv;
                            for (std::size_t dy = 0; dy < win; ++dy)
                                for (std::size_t dxx = 0; dxx < win; ++dxx)
                                    dx.at(n, c, y * win + dy, x * win + dxx) = g;
                        }
            break;
        }
        case LayerKind::Flatten: dx.data = grad.data; break;
        }
        grad = std::move(dx);
        if (!need_dx)
            break;
    }
    gs.input = std::move(grad);
    return gs;
}

template <typename Real>
void apply_masked_step(BasicSparseModel<Real> &model, const GradientSet<Real> &grads, Real lr) {
    if (grads.weights.size() != model.weights.size())
        throw InvalidArgument("apply_masked_step: gradient set does not match the model");
    for (std::size_t k = 0; k < model.weights.size(); ++k) {
        auto &w = model.weights[k];
        const auto &g = grads.weights[k];
        if (g.size() != w.size())
            throw InvalidArgument("apply_masked_step: gradient shape mismatch");
        auto &vals = w.mutable_values();
        const auto &mask = w.mask();
        for (std::size_t j = 0; j < vals.size(); ++j)
            if (mask[j])
                vals[j] -= lr * g[j];
        auto &b = model.biases[k];
        const auto &gb = grads.biases[k];
        for (std::size_t j = 0; j < b.size() && j < gb.size(); ++j)
            b[j] -= lr * gb[j];
    }
}

#define FEDMEF_INSTANTIATE_NETWORK(R)                                                                         \
    template ForwardResult<R> forward<R>(const BasicSparseModel<R> &, const Tensor4D<R> &,                      \
                                         const ForwardOptions &);                                             \
    template Tensor4D<R> predict<R>(const BasicSparseModel<R> &, const Tensor4D<R> &, kernels::Backend);       \
    template GradientSet<R> backward<R>(const BasicSparseModel<R> &, const ForwardTrace<R> &,                  \
                                        const Tensor4D<R> &, const BackwardOptions &);                        \
    template void apply_masked_step<R>(BasicSparseModel<R> &, const GradientSet<R> &, R);

FEDMEF_INSTANTIATE_NETWORK(float)
FEDMEF_INSTANTIATE_NETWORK(double)

} // namespace fedmef::nn
