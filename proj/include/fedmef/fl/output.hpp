#pragma once

#include "fedmef/fl/simulator.hpp"

#include <filesystem>
#include <ostream>
#include <span>
#include <string>

namespace fedmef::fl {

/// Column order of metrics.csv.
inline constexpr const char *kMetricsHeader =
    "round,variant,seed,train_loss,eval_acc,post_adjust_drop,theta_low_norm,mask_sparsity,cache_bits,wire_bits";

/// Shortest text that reads back to the same double.
std::string format_real(double v);

/// Header row followed by one row per round of every run, in the order given.
void write_metrics_csv(std::ostream &out, std::span<const RunResult> runs);

/// metrics.csv, cache_telemetry.csv, extrusion.csv and adjustments.csv for one run.
void write_run_directory(const std::filesystem::path &dir, const RunResult &run);

/// Per-seed final figures plus their mean and standard deviation, as JSON text.
std::string summary_json(std::span<const RunResult> runs, const std::string &config_text);

} // namespace fedmef::fl
