#include "fedmef/cost/cost_model.hpp"

#include "fedmef/errors.hpp"
#include "fedmef/sap/activation_cache.hpp"
#include "fedmef/sparse/codec.hpp"

#include <cmath>

namespace fedmef::cost {

std::string_view framework_name(Framework f) {
    switch (f) {
    case Framework::FedAvg:
        return "FedAvg";
    case Framework::StaticPrune:
        return "StaticPrune";
    case Framework::FedDST:
        return "FedDST";
    case Framework::FedTiny:
        return "FedTiny";
    case Framework::FedMef:
        return "FedMef";
    }
    return "?";
}

std::size_t CostLayer::weight_count() const noexcept {
    return kind == Kind::Conv ? kernel * kernel * in_channels * out_channels : in_features * out_features;
}

double CostLayer::forward_flops() const noexcept {
    if (kind == Kind::Conv)
        return 2.0 * static_cast<double>(kernel * kernel * in_channels * out_channels) *
               static_cast<double>(out_h * out_w);
    return 2.0 * static_cast<double>(in_features * out_features);
}

std::size_t CostModel::weight_count() const noexcept {
    std::size_t n = 0;
    for (const auto &l : layers)
        n += l.weight_count();
    return n;
}

std::size_t CostModel::cached_activation_count() const noexcept {
    std::size_t n = 0;
    for (const auto &l : layers)
        n += l.cached_input;
    return n;
}

CostModel cost_model_of(const std::vector<nn::LayerSpec> &layers, nn::ShapeCHW input) {
    const auto shapes = nn::infer_shapes(layers, input);
    CostModel m;
    m.name = "custom";
    nn::ShapeCHW in = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto &spec = layers[i];
        const auto &out = shapes[i];
        switch (spec.kind) {
        case nn::LayerKind::Conv: {
            CostLayer c;
            c.kind = CostLayer::Kind::Conv;
            c.name = "conv" + std::to_string(i);
            c.kernel = spec.kernel_size;
            c.in_channels = spec.in_channels;
            c.out_channels = spec.out_channels;
            c.out_h = out.h;
            c.out_w = out.w;
            c.cached_input = in.count();
            c.cached_width = in.w;
            m.layers.push_back(c);
            break;
        }
        case nn::LayerKind::Linear: {
            CostLayer c;
            c.kind = CostLayer::Kind::Linear;
            c.name = "linear" + std::to_string(i);
            c.in_features = spec.in_features;
            c.out_features = spec.out_features;
            c.cached_input = in.count();
            c.cached_width = in.count();
            m.layers.push_back(c);
            m.bias_count += spec.out_features;
            break;
        }
        case nn::LayerKind::ReLU:
            m.relu_elements += out.count();
            break;
        case nn::LayerKind::AvgPool:
        case nn::LayerKind::Flatten:
            break;
        default:
            throw InvalidArgument("cost_model_of: unknown layer kind");
        }
        in = out;
    }
    return m;
}

CostModel resnet18_cifar(std::size_t classes) {
    CostModel m;
    m.name = "resnet18";
    auto conv = [&](std::string name, std::size_t k, std::size_t cin, std::size_t cout, std::size_t out_hw,
                    std::size_t cached, std::size_t cached_w) {
        CostLayer c;
        c.kind = CostLayer::Kind::Conv;
        c.name = std::move(name);
        c.kernel = k;
        c.in_channels = cin;
        c.out_channels = cout;
        c.out_h = c.out_w = out_hw;
        c.cached_input = cached;
        c.cached_width = cached_w;
        m.layers.push_back(c);
    };

    std::size_t hw = 32, ch = 64;
    conv("stem", 3, 3, 64, 32, 3 * 32 * 32, 32);
    m.relu_elements += 64 * 32 * 32;
    const std::size_t widths[4] = {64, 128, 256, 512};
    for (std::size_t stage = 0; stage < 4; ++stage) {
        for (std::size_t block = 0; block < 2; ++block) {
            const std::size_t stride = (stage > 0 && block == 0) ? 2 : 1;
            const std::size_t out = hw / stride;
            const std::size_t w = widths[stage];
            const std::string prefix = "layer" + std::to_string(stage + 1) + "." + std::to_string(block);
            conv(prefix + ".conv1", 3, ch, w, out, ch * hw * hw, hw);
            conv(prefix + ".conv2", 3, w, w, out, w * out * out, out);
            // The projection shares the block input already cached by conv1.
            if (stride != 1 || ch != w)
                conv(prefix + ".shortcut", 1, ch, w, out, 0, hw);
            m.relu_elements += 2 * w * out * out;
            ch = w;
            hw = out;
        }
    }
    CostLayer fc;
    fc.kind = CostLayer::Kind::Linear;
    fc.name = "fc";
    fc.in_features = 512;
    fc.out_features = classes;
    fc.cached_input = 512;
    fc.cached_width = 512;
    m.layers.push_back(fc);
    m.bias_count = classes;
    return m;
}

ModelFlops flops_of_model(const CostModel &model, std::span<const double> density) {
    if (density.size() != 1 && density.size() != model.layers.size())
        throw InvalidArgument("flops_of_model: need one density or one per layer");
    ModelFlops f;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const double d = density.size() == 1 ? density[0] : density[i];
        if (d < 0.0 || d > 1.0)
            throw InvalidArgument("flops_of_model: density outside [0, 1]");
        const double fl = model.layers[i].forward_flops();
        f.dense += fl;
        f.sparse += d * fl;
    }
    return f;
}

namespace {

double need(const std::optional<double> &v, const char *name) {
    if (!v)
        throw ConfigError(std::string("cost inputs: missing ") + name);
    return *v;
}

} // namespace

double memory_footprint(Framework f, const CostInputs &in) {
    switch (f) {
    case Framework::FedAvg:
        return 2.0 * need(in.param_dense, "M^p_d") + 2.0 * need(in.act_dense, "M^a_d");
    case Framework::StaticPrune:
        return 2.0 * need(in.param_sparse, "M^p_s") + 2.0 * need(in.act_dense, "M^a_d");
    case Framework::FedDST:
    case Framework::FedTiny:
        return 2.0 * need(in.param_sparse, "M^p_s") + 2.0 * need(in.act_dense, "M^a_d") +
               need(in.topk_memory, "M_xi");
    case Framework::FedMef:
        return 2.0 * need(in.param_sparse, "M^p_s") + need(in.act_sparse, "M^a_s") + need(in.act_dense, "M^a_d") +
               need(in.topk_memory, "M_xi");
    }
    throw InvalidArgument("memory_footprint: unknown framework");
}

double training_flops(Framework f, double fd, double fs, double fo, double e) {
    if (e < 1.0)
        throw InvalidArgument("training_flops: need at least one epoch");
    switch (f) {
    case Framework::FedAvg:
        return 3.0 * fd * e;
    case Framework::StaticPrune:
    case Framework::FedDST:
        return 3.0 * fs * e;
    case Framework::FedTiny:
        return 3.0 * fs * (e - 1.0) + fs + 2.0 * fd;
    case Framework::FedMef:
        return 3.0 * (fs + fo) * (e - 1.0) + (fs + fo) + 2.0 * fd;
    }
    throw InvalidArgument("training_flops: unknown framework");
}

double training_flops(Framework f, const CostInputs &in) {
    const double fd = need(in.flops_dense, "F_d");
    const double e = need(in.epochs, "E");
    const double fs = f == Framework::FedAvg ? 0.0 : need(in.flops_sparse, "F_s");
    const double fo = f == Framework::FedMef ? need(in.overhead, "F_o") : 0.0;
    return training_flops(f, fd, fs, fo, e);
}

double comm_bits(Framework f, double od, double os, double oxi) {
    switch (f) {
    case Framework::FedAvg:
        return 2.0 * od;
    case Framework::StaticPrune:
    case Framework::FedDST:
        return 2.0 * os;
    case Framework::FedTiny:
    case Framework::FedMef:
        return 2.0 * os + oxi;
    }
    throw InvalidArgument("comm_bits: unknown framework");
}

double comm_bits(Framework f, const CostInputs &in) {
    if (f == Framework::FedAvg)
        return comm_bits(f, need(in.comm_dense, "O_d"), 0.0, 0.0);
    const double oxi = (f == Framework::FedTiny || f == Framework::FedMef) ? need(in.comm_topk, "O_xi") : 0.0;
    return comm_bits(f, 0.0, need(in.comm_sparse, "O_s"), oxi);
}

double overhead_flops(double s_m, double n_theta, double n_a) {
    const double sort = n_a > 1.0 ? n_a * std::log2(n_a) : 0.0;
    return 4.0 * (1.0 - s_m) * n_theta + sort;
}

double overhead_flops_per_sample(const CostModel &model, double s_m, std::size_t batch) {
    if (batch == 0)
        throw InvalidArgument("overhead_flops_per_sample: zero batch");
    const double b = static_cast<double>(batch);
    double total = 4.0 * (1.0 - s_m) * static_cast<double>(model.weight_count());
    for (const auto &l : model.layers) {
        const double n = b * static_cast<double>(l.cached_input);
        if (n > 1.0)
            total += n * std::log2(n);
    }
    return total / b;
}

namespace {

struct LayerMatrix {
    std::size_t rows, cols;
};

LayerMatrix weight_matrix(const CostLayer &l) {
    if (l.kind == CostLayer::Kind::Conv)
        return {l.out_channels * l.in_channels * l.kernel, l.kernel};
    return {l.out_features, l.in_features};
}

std::uint64_t sparse_bits(std::size_t n, std::size_t nnz, unsigned b, std::size_t rows, std::size_t cols) {
    const double d = n == 0 ? 0.0 : static_cast<double>(nnz) / static_cast<double>(n);
    const auto scheme = sparse::select_scheme(d, rows, cols, nnz);
    return sparse::storage_bits(n, nnz, b, scheme, rows, cols);
}

} // namespace

CostInputs cost_inputs(const CostModel &model, double s_m, const ReportSettings &st) {
    if (s_m < 0.0 || s_m >= 1.0)
        throw InvalidArgument("cost_inputs: mask sparsity outside [0, 1)");
    const unsigned b = st.value_bits;
    const double bias_bits = static_cast<double>(model.bias_count) * b;
    double p_dense = bias_bits, p_sparse = bias_bits, topk = 0.0;
    double a_dense = static_cast<double>(st.batch * model.relu_elements); // sign bitmaps
    double a_sparse = a_dense;
    std::vector<double> density;
    for (const auto &l : model.layers) {
        const std::size_t n = l.weight_count();
        const auto nnz = static_cast<std::size_t>(std::llround((1.0 - s_m) * static_cast<double>(n)));
        const auto wm = weight_matrix(l);
        p_dense += static_cast<double>(n) * b;
        p_sparse += static_cast<double>(sparse_bits(n, nnz, b, wm.rows, wm.cols));
        const auto xi = static_cast<std::size_t>(std::llround(st.adjust_rate * static_cast<double>(nnz)));
        topk += static_cast<double>(sparse::storage_bits(n, xi, b, sparse::Scheme::COO));
        density.push_back(static_cast<double>(nnz) / static_cast<double>(n));

        if (l.cached_input > 0) {
            const std::size_t na = st.batch * l.cached_input;
            const std::size_t cols = l.cached_width;
            const std::size_t rows = na / cols;
            const std::size_t kept = sap::kept_count(na, st.activation_sparsity);
            a_dense += static_cast<double>(na) * b;
            a_sparse += static_cast<double>(sparse_bits(na, kept, b, rows, cols));
        }
    }
    const auto fl = flops_of_model(model, density);

    CostInputs in;
    in.param_dense = p_dense;
    in.param_sparse = p_sparse;
    in.act_dense = a_dense;
    in.act_sparse = a_sparse;
    in.topk_memory = topk;
    in.flops_dense = fl.dense;
    in.flops_sparse = fl.sparse;
    in.overhead = overhead_flops_per_sample(model, s_m, st.batch);
    in.comm_dense = p_dense;
    in.comm_sparse = p_sparse;
    in.comm_topk = topk;
    in.epochs = static_cast<double>(st.epochs);
    return in;
}

std::vector<ReportRow> cost_report(const CostModel &model, std::span<const double> sparsities,
                                   const ReportSettings &st) {
    std::vector<ReportRow> rows;
    const Framework all[] = {Framework::FedAvg, Framework::StaticPrune, Framework::FedDST, Framework::FedTiny,
                             Framework::FedMef};
    for (double s : sparsities) {
        const auto in = cost_inputs(model, s, st);
        const double mem0 = memory_footprint(Framework::FedAvg, in);
        const double fl0 = training_flops(Framework::FedAvg, in);
        const double co0 = comm_bits(Framework::FedAvg, in);
        for (auto f : all) {
            ReportRow r;
            r.framework = f;
            r.mask_sparsity = s;
            r.memory_bits = memory_footprint(f, in);
            r.flops = training_flops(f, in);
            r.comm_bits = comm_bits(f, in);
            r.memory_ratio = r.memory_bits / mem0;
            r.flops_ratio = r.flops / fl0;
            r.comm_ratio = r.comm_bits / co0;
            rows.push_back(r);
        }
    }
    return rows;
}

} // namespace fedmef::cost
