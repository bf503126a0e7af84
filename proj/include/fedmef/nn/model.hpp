#pragma once

#include "fedmef/sparse/masked_tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fedmef::nn {

enum class LayerKind { Conv, ReLU, AvgPool, Flatten, Linear };

std::string to_string(LayerKind kind);

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;

    // Conv
    std::size_t kernel_size = 0;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool nsconv = false;
    double gamma = 1.0;

    // Linear
    std::size_t in_features = 0;
    std::size_t out_features = 0;

    // AvgPool (stride equals window)
    std::size_t window = 0;

    static LayerSpec conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                          std::size_t stride = 1, std::size_t padding = 0, bool nsconv = true, double gamma = 1.0);
    static LayerSpec relu();
    static LayerSpec avg_pool(std::size_t window);
    static LayerSpec flatten();
    static LayerSpec linear(std::size_t in_features, std::size_t out_features);

    bool has_weights() const noexcept { return kind == LayerKind::Conv || kind == LayerKind::Linear; }

    friend bool operator==(const LayerSpec &, const LayerSpec &) = default;
};

/// Per-sample activation shape (channels, height, width).
struct ShapeCHW {
    std::size_t c = 0, h = 0, w = 0;
    std::size_t count() const noexcept { return c * h * w; }
    friend bool operator==(const ShapeCHW &, const ShapeCHW &) = default;
};

/// Output shape after every layer. Throws InvalidArgument when the chain is inconsistent.
std::vector<ShapeCHW> infer_shapes(const std::vector<LayerSpec> &layers, ShapeCHW input);

/// Weight tensor shape: conv (c_out, c_in, k, k); linear (out, in).
sparse::Shape weight_shape(const LayerSpec &spec);

/// Ordered layer specs plus one masked weight tensor (and bias) per weighted layer.
template <typename Real> struct BasicSparseModel {
    ShapeCHW input;
    std::vector<LayerSpec> layers;
    /// Indices into `layers` of the weighted layers, in order.
    std::vector<std::size_t> weighted;
    std::vector<sparse::BasicMaskedTensor<Real>> weights;
    /// Linear layers carry a bias; conv biases are empty.
    std::vector<std::vector<Real>> biases;

    std::size_t weighted_count() const noexcept { return weights.size(); }

    /// Pruned over total weight elements across all weighted layers.
    double mask_sparsity() const noexcept;

    template <typename U> BasicSparseModel<U> cast() const {
        BasicSparseModel<U> out;
        out.input = input;
        out.layers = layers;
        out.weighted = weighted;
        for (const auto &w : weights)
            out.weights.push_back(w.template cast<U>());
        for (const auto &b : biases)
            out.biases.emplace_back(b.begin(), b.end());
        return out;
    }

    friend bool operator==(const BasicSparseModel &, const BasicSparseModel &) = default;
};

using SparseModel = BasicSparseModel<float>;
using SparseModel64 = BasicSparseModel<double>;

/// Dense model with He-normal weights and zero biases; validates the layer chain.
template <typename Real>
BasicSparseModel<Real> init_model(ShapeCHW input, std::vector<LayerSpec> layers, std::uint64_t seed);

/// Applies an independent uniform random mask at `sparsity` to every weighted layer not in `exclude`.
template <typename Real>
void random_prune_model(BasicSparseModel<Real> &model, double sparsity, std::uint64_t seed,
                        const std::vector<std::size_t> &exclude = {});

} // namespace fedmef::nn
