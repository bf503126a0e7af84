#pragma once

#include "fedmef/bae/extrusion.hpp"
#include "fedmef/fl/variant.hpp"
#include "fedmef/nn/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fedmef::config {

/// Everything a run needs. Defaults follow the full-scale setup; desk configs override them.
struct ExperimentConfig {
    // [experiment]
    fl::Variant variant = fl::Variant::FedMef;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "runs";

    // [model]
    /// "desk", "resnet18" (cost reporting only) or an explicit layer list such as
    /// "conv(3,10,3,1,1) relu pool(2) flatten linear(640,3)".
    std::string architecture = "desk";
    nn::ShapeCHW input{3, 16, 16};
    double gamma = 1.0;
    /// Weighted-layer indices that are never pruned.
    std::vector<std::size_t> prune_exclude;

    // [data]
    std::string source = "synth"; ///< synth | csv
    std::string train_csv;
    std::string test_csv;
    std::string value_range = "auto"; ///< auto | unit | byte
    std::size_t classes = 3;
    std::size_t train_per_class = 200;
    std::size_t test_per_class = 100;
    double noise = 0.1;

    // [federation]
    std::size_t clients = 100;
    /// 0 means every client in every round.
    std::size_t clients_per_round = 0;
    double alpha = 0.5;
    std::size_t rounds = 500;
    std::size_t local_epochs = 10;
    std::size_t adjust_period = 10;
    std::size_t adjust_stop = 300;
    std::size_t batch_size = 64;
    bool parallel_clients = true;

    // [training]
    double lr0 = 1.0;
    double lr_decay = 0.95;

    // [sparsity]
    double mask_sparsity = 0.9;
    double activation_sparsity = 0.9;
    unsigned value_bits = 32;

    // [extrusion]
    double lambda = 1e-3;
    bae::Penalty penalty = bae::Penalty::L2;

    friend bool operator==(const ExperimentConfig &, const ExperimentConfig &) = default;
};

/// Parses `key = value` lines grouped under `[section]` headers; `#` starts a comment.
/// Unknown sections or keys, duplicates and malformed values throw ConfigError naming the line.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path &path);

/// Canonical text form; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig &cfg);

/// Cross-field checks. Throws ConfigError listing every problem found.
void validate(const ExperimentConfig &cfg);

/// Layer chain for the architecture, with NSConv switched on or off for every conv layer.
/// Throws ConfigError for a malformed layer list.
std::vector<nn::LayerSpec> build_layers(const ExperimentConfig &cfg, bool nsconv);

/// The small CNN used for desk runs: two 3x3 convs (10 and 20 channels) each followed by ReLU
/// and 2x2 average pooling, then a linear classifier.
std::vector<nn::LayerSpec> desk_layers(nn::ShapeCHW input, std::size_t classes, bool nsconv, double gamma);

/// Output root from FEDMEF_OUTPUT_ROOT (current directory when unset) joined with output_dir.
std::filesystem::path output_root(const ExperimentConfig &cfg);

} // namespace fedmef::config
