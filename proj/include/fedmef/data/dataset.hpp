#pragma once

#include "fedmef/nn/model.hpp"
#include "fedmef/nn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fedmef::data {

/// Images in [0, 1] with integer class labels.
struct LabeledDataset {
    nn::ShapeCHW shape;
    std::size_t classes = 0;
    /// Sample-major flat storage, shape.count() values per sample.
    std::vector<float> values;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const float> sample(std::size_t i) const {
        return {values.data() + i * shape.count(), shape.count()};
    }

    /// Throws InvalidArgument on inconsistent sizes or out-of-range labels.
    void validate() const;

    /// Gathers the listed samples into an (N, C, H, W) batch.
    template <typename Real> nn::Tensor4D<Real> batch(std::span<const std::size_t> indices) const;
    std::vector<int> batch_labels(std::span<const std::size_t> indices) const;

    friend bool operator==(const LabeledDataset &, const LabeledDataset &) = default;
};

enum class ValueRange { Auto, Unit, Byte };

/// Rows are `label, v0, v1, ...` with shape.count() values. Byte-range values are divided by
/// 255; Auto picks Byte when any value in the file exceeds 1. `classes` = 0 infers max label + 1.
/// Throws ParseError with the 1-based line number on a malformed row.
LabeledDataset load_csv(const std::filesystem::path &path, nn::ShapeCHW shape, std::size_t classes = 0,
                        ValueRange range = ValueRange::Auto);

/// Writes unit-range values with enough digits to read back exactly.
void save_csv(const LabeledDataset &ds, const std::filesystem::path &path);

/// Class templates on a g x g grid of cells (g = ceil(sqrt(C))): class c lights cell c. Every
/// sample is its template plus N(0, noise^2) pixel noise, clamped to [0, 1]. Samples are
/// ordered class-major.
LabeledDataset synth_blobs(std::size_t classes, std::size_t per_class, nn::ShapeCHW shape, double noise,
                           std::uint64_t seed);

} // namespace fedmef::data
