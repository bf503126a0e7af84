#include "fedmef/nn/model.hpp"

#include "fedmef/errors.hpp"
#include "fedmef/kernels/conv.hpp"
#include "fedmef/rng.hpp"

#include <algorithm>
#include <cmath>

namespace fedmef::nn {

std::string to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ReLU: return "relu";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Linear: return "linear";
    }
    return "unknown";
}

LayerSpec LayerSpec::conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                          std::size_t stride, std::size_t padding, bool nsconv, double gamma) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.kernel_size = kernel_size;
    s.stride = stride;
    s.padding = padding;
    s.nsconv = nsconv;
    s.gamma = gamma;
    return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::avg_pool(std::size_t window) {
    LayerSpec s;
    s.kind = LayerKind::AvgPool;
    s.window = window;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

LayerSpec LayerSpec::linear(std::size_t in_features, std::size_t out_features) {
    LayerSpec s;
    s.kind = LayerKind::Linear;
    s.in_features = in_features;
    s.out_features = out_features;
    return s;
}

std::vector<ShapeCHW> infer_shapes(const std::vector<LayerSpec> &layers, ShapeCHW input) {
    std::vector<ShapeCHW> out;
    out.reserve(layers.size());
    ShapeCHW cur = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto &l = layers[i];
        const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + "): ";
        switch (l.kind) {
        case LayerKind::Conv: {
            if (l.in_channels != cur.c)
                throw InvalidArgument(where + "expects " + std::to_string(l.in_channels) + " input channels, got " +
                                      std::to_string(cur.c));
            if (l.kernel_size == 0 || l.out_channels == 0 || l.stride == 0)
                throw InvalidArgument(where + "kernel, channels and stride must be positive");
            if (!(l.gamma > 0.0))
                throw InvalidArgument(where + "gamma must be positive");
            const auto h = kernels::conv_out_extent(cur.h, l.kernel_size, l.stride, l.padding);
            const auto w = kernels::conv_out_extent(cur.w, l.kernel_size, l.stride, l.padding);
            if (h == 0 || w == 0)
                throw InvalidArgument(where + "kernel does not fit the input");
            cur = {l.out_channels, h, w};
            break;
        }
        case LayerKind::ReLU: break;
        case LayerKind::AvgPool:
            if (l.window == 0 || cur.h < l.window || cur.w < l.window)
                throw InvalidArgument(where + "pool window does not fit the input");
            cur = {cur.c, cur.h / l.window, cur.w / l.window};
            break;
        case LayerKind::Flatten: cur = {cur.count(), 1, 1}; break;
        case LayerKind::Linear:
            if (cur.h != 1 || cur.w != 1)
                throw InvalidArgument(where + "linear layer needs a flattened input");
            if (l.in_features != cur.c || l.out_features == 0)
                throw InvalidArgument(where + "expects " + std::to_string(l.in_features) + " features, got " +
                                      std::to_string(cur.c));
            cur = {l.out_features, 1, 1};
            break;
        }
        out.push_back(cur);
    }
    return out;
}

sparse::Shape weight_shape(const LayerSpec &spec) {
    switch (spec.kind) {
    case LayerKind::Conv: return {spec.out_channels, spec.in_channels, spec.kernel_size, spec.kernel_size};
    case LayerKind::Linear: return {spec.out_features, spec.in_features};
    default: return {};
    }
}

template <typename Real> double BasicSparseModel<Real>::mask_sparsity() const noexcept {
    std::size_t total = 0, pruned = 0;
    for (const auto &w : weights) {
        total += w.size();
        pruned += w.mask().count_pruned();
    }
    return total == 0 ? 0.0 : static_cast<double>(pruned) / static_cast<double>(total);
}

template <typename Real>
BasicSparseModel<Real> init_model(ShapeCHW input, std::vector<LayerSpec> layers, std::uint64_t seed) {
    infer_shapes(layers, input);
    BasicSparseModel<Real> m;
    m.input = input;
    m.layers = std::move(layers);
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const auto &l = m.layers[i];
        if (!l.has_weights())
            continue;
        const auto shape = weight_shape(l);
        const std::size_t fan_in = l.kind == LayerKind::Conv ? l.in_channels * l.kernel_size * l.kernel_size
                                                             : l.in_features;
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        Rng rng = Rng::derive(seed, 0x1417, i);
        std::vector<Real> values(sparse::element_count(shape));
        for (auto &v : values)
            v = static_cast<Real>(rng.normal(0.0, stddev));
        m.weighted.push_back(i);
        m.weights.emplace_back(std::move(values), sparse::Mask(shape, true));
        m.biases.emplace_back(l.kind == LayerKind::Linear ? l.out_features : 0, Real{0});
    }
    return m;
}

template <typename Real>
void random_prune_model(BasicSparseModel<Real> &model, double sparsity, std::uint64_t seed,
                        const std::vector<std::size_t> &exclude) {
    for (std::size_t k = 0; k < model.weights.size(); ++k) {
        if (std::find(exclude.begin(), exclude.end(), k) != exclude.end())
            continue;
        auto &w = model.weights[k];
        w.reset_mask(sparse::random_prune(w.shape(), sparsity, Rng::derive(seed, 0x9a5c, k).next_u64()));
    }
}

template struct BasicSparseModel<float>;
template struct BasicSparseModel<double>;
template BasicSparseModel<float> init_model<float>(ShapeCHW, std::vector<LayerSpec>, std::uint64_t);
template BasicSparseModel<double> init_model<double>(ShapeCHW, std::vector<LayerSpec>, std::uint64_t);
template void random_prune_model<float>(BasicSparseModel<float> &, double, std::uint64_t,
                                        const std::vector<std::size_t> &);
template void random_prune_model<double>(BasicSparseModel<double> &, double, std::uint64_t,
                                         const std::vector<std::size_t> &);

} // namespace fedmef::nn
