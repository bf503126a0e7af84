#pragma once

#include "fedmef/nn/model.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedmef::cost {

enum class Framework { FedAvg, StaticPrune, FedDST, FedTiny, FedMef };

std::string_view framework_name(Framework f);

/// A weighted layer as seen by the cost model.
struct CostLayer {
    enum class Kind { Conv, Linear };
    Kind kind = Kind::Conv;
    std::string name;
    // Conv
    std::size_t kernel = 0, in_channels = 0, out_channels = 0, out_h = 0, out_w = 0;
    // Linear
    std::size_t in_features = 0, out_features = 0;
    /// Input elements per sample the layer keeps for backward; 0 when it shares another
    /// layer's cached input.
    std::size_t cached_input = 0;
    /// Last dimension of the cached input (its 2-D view has cached_input / cached_width rows).
    std::size_t cached_width = 1;

    std::size_t weight_count() const noexcept;
    /// Dense forward FLOPs per sample (multiply-accumulate counted as 2).
    double forward_flops() const noexcept;
};

struct CostModel {
    std::string name;
    std::vector<CostLayer> layers;
    /// ReLU outputs per sample; each needs one sign bit in the backward cache.
    std::size_t relu_elements = 0;
    std::size_t bias_count = 0;

    std::size_t weight_count() const noexcept;
    std::size_t cached_activation_count() const noexcept;
};

/// Cost view of a trainable layer chain. Throws InvalidArgument for an unknown layer kind.
CostModel cost_model_of(const std::vector<nn::LayerSpec> &layers, nn::ShapeCHW input);

/// ResNet18 for 32x32 inputs (3x3 stem, four stages of two basic blocks, 1x1 projection
/// shortcuts). Static data for cost ratios only.
CostModel resnet18_cifar(std::size_t classes = 10);

struct ModelFlops {
    double dense = 0.0;  ///< F_d
    double sparse = 0.0; ///< F_s
};

/// Forward FLOPs per sample. `density` holds one value for every layer or a single uniform value.
/// Backward is counted as twice the forward elsewhere.
ModelFlops flops_of_model(const CostModel &model, std::span<const double> density);

/// Inputs of the closed-form estimators, in bits and FLOPs. Missing entries stay empty.
struct CostInputs {
    std::optional<double> param_dense, param_sparse;           // M^p_d, M^p_s
    std::optional<double> act_dense, act_sparse;               // M^a_d, M^a_s
    std::optional<double> topk_memory;                         // M_xi
    std::optional<double> flops_dense, flops_sparse, overhead; // F_d, F_s, F_o
    std::optional<double> comm_dense, comm_sparse, comm_topk;  // O_d, O_s, O_xi
    std::optional<double> epochs;
};

/// Peak training memory in bits. Throws ConfigError when a required input is missing.
double memory_footprint(Framework f, const CostInputs &in);

/// Maximum training FLOPs of one round.
double training_flops(Framework f, double flops_dense, double flops_sparse, double overhead, double epochs);
double training_flops(Framework f, const CostInputs &in);

/// Maximum data exchanged per client per round, in bits.
double comm_bits(Framework f, double comm_dense, double comm_sparse, double comm_topk);
double comm_bits(Framework f, const CostInputs &in);

/// Extra FLOPs of standardization and activation pruning, taken over the whole network as
/// one pass: 4 (1 - s_m) n_theta + n_a log2 n_a.
double overhead_flops(double mask_sparsity, double n_theta, double n_a);

/// The same overhead as the simulator incurs it, per sample: standardization once per
/// mini-batch, and one top-k selection per layer over the batch's B * n_l cached elements.
double overhead_flops_per_sample(const CostModel &model, double mask_sparsity, std::size_t batch);

struct ReportSettings {
    double activation_sparsity = 0.9;
    std::size_t epochs = 10;
    std::size_t batch = 64;
    unsigned value_bits = 32;
    /// Adjustment rate used to size the TopK sets (its maximum is 0.4).
    double adjust_rate = 0.4;
};

struct ReportRow {
    Framework framework = Framework::FedAvg;
    double mask_sparsity = 0.0;
    double memory_bits = 0.0;
    double flops = 0.0;
    double comm_bits = 0.0;
    double memory_ratio = 1.0;
    double flops_ratio = 1.0;
    double comm_ratio = 1.0;
};

/// Inputs for a model at the given mask sparsity. The overhead term uses
/// overhead_flops_per_sample.
CostInputs cost_inputs(const CostModel &model, double mask_sparsity, const ReportSettings &settings);

/// One row per framework per sparsity; ratios are against dense FedAvg.
std::vector<ReportRow> cost_report(const CostModel &model, std::span<const double> sparsities,
                                   const ReportSettings &settings);

} // namespace fedmef::cost
