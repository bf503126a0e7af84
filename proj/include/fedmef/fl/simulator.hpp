#pragma once

#include "fedmef/bae/extrusion.hpp"
#include "fedmef/config/experiment.hpp"
#include "fedmef/data/dataset.hpp"
#include "fedmef/fl/protocol.hpp"
#include "fedmef/fl/variant.hpp"
#include "fedmef/nn/network.hpp"
#include "fedmef/rng.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fedmef::fl {

struct RoundMetrics {
    std::size_t round = 0;
    bool adjusted = false;
    double train_loss = 0.0;
    double eval_acc = 0.0;
    /// Accuracy before minus after the structure adjustment (adjustment rounds only).
    std::optional<double> post_adjust_drop;
    /// Norm of the marked weights in the aggregated model (adjustment rounds only).
    std::optional<double> theta_low_norm;
    double mask_sparsity = 0.0;
    /// Largest activation cache held by any client during the round.
    std::uint64_t cache_bits = 0;
    /// Largest per-client exchange of the round (download + upload + TopK), at value_bits.
    std::uint64_t wire_bits = 0;
    /// Framed record bytes behind wire_bits, headers included.
    std::uint64_t wire_bytes = 0;
    /// Closed-form per-round maximum for the variant.
    std::uint64_t wire_bound_bits = 0;
};

struct AdjustmentRecord {
    std::size_t round = 0;
    double zeta = 0.0;
    double acc_before = 0.0;
    double acc_after = 0.0;
    double theta_low_norm = 0.0;
    std::vector<LayerAdjustment> layers;
    /// Grown positions whose value after adjustment is not exactly zero.
    std::size_t nonzero_grown = 0;
    /// Fraction of dropped weights that had been marked for extrusion.
    double marked_overlap = 0.0;
    double sparsity_after = 0.0;
};

struct CacheRow {
    std::size_t round = 0;
    nn::CacheRecord record;
};

struct ExtrusionRow {
    std::size_t round = 0;
    std::size_t client = 0;
    bae::ScheduleState state;
};

struct RunResult {
    Variant variant = Variant::FedMef;
    std::uint64_t seed = 0;
    std::vector<RoundMetrics> rounds;
    std::vector<AdjustmentRecord> adjustments;
    std::vector<CacheRow> cache_rows;
    std::vector<ExtrusionRow> extrusion_rows;
    std::vector<std::size_t> shard_sizes;
    nn::SparseModel final_model;
};

/// Inputs and knobs of one client's local round.
struct LocalSettings {
    std::size_t epochs = 1;
    std::size_t batch_size = 1;
    /// Global index of the round's first epoch, for the base learning-rate decay.
    std::size_t first_epoch = 0;
    double lr0 = 1.0;
    double lr_decay = 1.0;
    sap::SapConfig sap;
    kernels::Backend backend = kernels::Backend::OpenMP;
    unsigned value_bits = 32;
    /// Surrogate loss and the budget-aware rate (needs `plan`).
    bool extrude = false;
    /// Collect TopK pruned-position gradients on the last batch.
    bool collect_topk = false;
    double zeta = 0.0;
    std::vector<std::size_t> exclude;
    bool record_schedule = false;
};

struct LocalResult {
    nn::SparseModel model;
    std::optional<TopKGradients> topk;
    double loss_sum = 0.0;
    std::size_t steps = 0;
    std::uint64_t max_cache_bits = 0;
    std::vector<nn::CacheRecord> first_cache_records;
    std::vector<bae::ScheduleState> schedule;
};

/// E epochs of masked mini-batch SGD on the shard (order reshuffled every epoch from `rng`).
LocalResult local_train(const nn::SparseModel &global, const data::LabeledDataset &train,
                        std::span<const std::size_t> shard, const LocalSettings &settings,
                        const bae::ExtrusionPlan *plan, Rng rng);

/// Fraction of correctly classified samples.
double evaluate(const nn::SparseModel &model, const data::LabeledDataset &test,
                kernels::Backend backend = kernels::Backend::OpenMP);

/// Initial global model for a variant: He-normal weights, then the variant's initial mask.
nn::SparseModel initial_model(const config::ExperimentConfig &cfg, std::uint64_t seed);

/// Runs cfg.rounds federated rounds of cfg.variant. Throws ConfigError before training when
/// the configuration is inconsistent.
RunResult run(const config::ExperimentConfig &cfg, std::uint64_t seed, const data::LabeledDataset &train,
              const data::LabeledDataset &test);

/// Training and test sets described by the config's [data] section for a given seed.
std::pair<data::LabeledDataset, data::LabeledDataset> load_datasets(const config::ExperimentConfig &cfg,
                                                                    std::uint64_t seed);

} // namespace fedmef::fl
