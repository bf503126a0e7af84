#include "fedmef/data/dataset.hpp"

#include "fedmef/errors.hpp"
#include "fedmef/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

namespace fedmef::data {

void LabeledDataset::validate() const {
    if (values.size() != labels.size() * shape.count())
        throw InvalidArgument("dataset: value count does not match sample count");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw InvalidArgument("dataset: label " + std::to_string(y) + " outside [0, classes)");
}

template <typename Real> nn::Tensor4D<Real> LabeledDataset::batch(std::span<const std::size_t> indices) const {
    nn::Tensor4D<Real> out({indices.size(), shape.c, shape.h, shape.w});
    const std::size_t per = shape.count();
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto s = sample(indices[b]);
        std::copy(s.begin(), s.end(), out.data.begin() + static_cast<std::ptrdiff_t>(b * per));
    }
    return out;
}

std::vector<int> LabeledDataset::batch_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out(indices.size());
    for (std::size_t b = 0; b < indices.size(); ++b)
        out[b] = labels[indices[b]];
    return out;
}

template nn::Tensor4D<float> LabeledDataset::batch<float>(std::span<const std::size_t>) const;
template nn::Tensor4D<double> LabeledDataset::batch<double>(std::span<const std::size_t>) const;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

double parse_number(std::string_view field, std::size_t line) {
    field = trim(field);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v))
        throw ParseError(line, "not a number: '" + std::string(field) + "'");
    return v;
}

} // namespace

LabeledDataset load_csv(const std::filesystem::path &path, nn::ShapeCHW shape, std::size_t classes,
                        ValueRange range) {
    std::ifstream in(path);
    if (!in)
        throw InvalidArgument("load_csv: cannot open " + path.string());
    const std::size_t per = shape.count();
    if (per == 0)
        throw InvalidArgument("load_csv: empty sample shape");

    LabeledDataset ds;
    ds.shape = shape;
    std::vector<double> raw;
    std::vector<std::size_t> lines;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        const std::string_view row = trim(text);
        if (row.empty())
            continue;
        std::size_t fields = 0;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = row.find(',', start);
            const std::string_view field = row.substr(start, comma == std::string_view::npos ? row.size() - start
                                                                                              : comma - start);
            const double v = parse_number(field, line);
            if (fields == 0) {
                if (v < 0.0 || v != std::floor(v) || v > std::numeric_limits<int>::max())
                    throw ParseError(line, "label must be a non-negative integer");
                ds.labels.push_back(static_cast<int>(v));
            } else {
                if (v < 0.0 || v > 255.0)
                    throw ParseError(line, "value outside [0, 255]");
                raw.push_back(v);
            }
            ++fields;
            if (comma == std::string_view::npos)
                break;
            start = comma + 1;
        }
        if (fields != per + 1)
            throw ParseError(line, "expected " + std::to_string(per + 1) + " fields, got " + std::to_string(fields));
        lines.push_back(line);
    }

    bool byte = range == ValueRange::Byte;
    if (range == ValueRange::Auto)
        byte = std::any_of(raw.begin(), raw.end(), [](double v) { return v > 1.0; });
    if (range == ValueRange::Unit) {
        for (std::size_t i = 0; i < raw.size(); ++i)
            if (raw[i] > 1.0)
                throw ParseError(lines[i / per], "value above 1 in unit-range file");
    }
    ds.values.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
        ds.values[i] = static_cast<float>(byte ? raw[i] / 255.0 : raw[i]);

    int max_label = -1;
    for (int y : ds.labels)
        max_label = std::max(max_label, y);
    ds.classes = classes == 0 ? static_cast<std::size_t>(max_label + 1) : classes;
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
        if (static_cast<std::size_t>(ds.labels[i]) >= ds.classes)
            throw ParseError(lines[i], "label " + std::to_string(ds.labels[i]) + " >= class count");
    return ds;
}

void save_csv(const LabeledDataset &ds, const std::filesystem::path &path) {
    ds.validate();
    std::ofstream out(path);
    if (!out)
        throw InvalidArgument("save_csv: cannot open " + path.string());
    char buf[64];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        for (float v : ds.sample(i)) {
            const auto res = std::to_chars(buf, buf + sizeof buf, v);
            out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
        }
        out << '\n';
    }
    if (!out)
        throw InvalidArgument("save_csv: write failed for " + path.string());
}

LabeledDataset synth_blobs(std::size_t classes, std::size_t per_class, nn::ShapeCHW shape, double noise,
                           std::uint64_t seed) {
    if (classes < 2)
        throw InvalidArgument("synth_blobs: need at least two classes");
    if (shape.count() == 0)
        throw InvalidArgument("synth_blobs: empty sample shape");
    if (noise < 0.0)
        throw InvalidArgument("synth_blobs: negative noise");
    const auto grid = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(classes))));
    if (grid > shape.h || grid > shape.w)
        throw InvalidArgument("synth_blobs: image too small for the class grid");

    const std::size_t per = shape.count();
    std::vector<std::vector<float>> templates(classes, std::vector<float>(per, 0.0f));
    for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t gr = c / grid, gc = c % grid;
        const std::size_t h0 = gr * shape.h / grid, h1 = (gr + 1) * shape.h / grid;
        const std::size_t w0 = gc * shape.w / grid, w1 = (gc + 1) * shape.w / grid;
        for (std::size_t ch = 0; ch < shape.c; ++ch)
            for (std::size_t h = h0; h < h1; ++h)
                for (std::size_t w = w0; w < w1; ++w)
                    templates[c][(ch * shape.h + h) * shape.w + w] = 1.0f;
    }

    LabeledDataset ds;
    ds.shape = shape;
    ds.classes = classes;
    ds.values.reserve(classes * per_class * per);
    Rng rng(seed);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            for (std::size_t j = 0; j < per; ++j) {
                double v = templates[c][j];
                if (noise > 0.0)
                    v = std::clamp(v + rng.normal(0.0, noise), 0.0, 1.0);
                ds.values.push_back(static_cast<float>(v));
            }
            ds.labels.push_back(static_cast<int>(c));
        }
    }
    return ds;
}

} // namespace fedmef::data
