#include "fedmef/check/self_check.hpp"
#include "fedmef/config/experiment.hpp"
#include "fedmef/cost/cost_model.hpp"
#include "fedmef/errors.hpp"
#include "fedmef/fl/output.hpp"
#include "fedmef/fl/simulator.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "json.hpp"

namespace {

using namespace fedmef;

int cmd_run(const std::string &config_path, std::optional<std::uint64_t> seed, const std::string &variant) {
    auto cfg = config::load_config(config_path);
    if (seed)
        cfg.seeds = {*seed};
    if (!variant.empty()) {
        const auto v = fl::parse_variant(variant);
        if (!v)
            throw ConfigError("unknown variant '" + variant + "'");
        cfg.variant = *v;
    }
    config::validate(cfg);
    if (cfg.architecture == "resnet18")
        throw ConfigError("architecture 'resnet18' cannot be trained; use cost-report");

    const auto root = config::output_root(cfg) / std::string(fl::variant_name(cfg.variant));
    std::filesystem::create_directories(root);
    const std::string text = config::serialize_config(cfg);
    std::vector<fl::RunResult> runs;
    for (auto s : cfg.seeds) {
        const auto [train, test] = fl::load_datasets(cfg, s);
        auto result = fl::run(cfg, s, train, test);
        fl::write_run_directory(root / ("seed_" + std::to_string(s)), result);
        const auto &last = result.rounds.back();
        std::cerr << fl::variant_name(cfg.variant) << " seed " << s << ": final accuracy " << last.eval_acc
                  << ", train loss " << last.train_loss << ", mask sparsity " << last.mask_sparsity << "\n";
        result.final_model = {};
        runs.push_back(std::move(result));
    }
    {
        std::ofstream out(root / "metrics.csv");
        fl::write_metrics_csv(out, runs);
    }
    {
        std::ofstream out(root / "summary.json");
        out << fl::summary_json(runs, text);
    }
    {
        std::ofstream out(root / "config.ini");
        out << text;
    }
    std::cout << root.string() << "\n";
    return 0;
}

int cmd_check(bool full) {
    const auto results = check::run_self_check(!full);
    bool ok = true;
    std::cout << std::left << std::setw(34) << "check" << std::setw(6) << "result" << "  seconds  detail\n";
    for (const auto &r : results) {
        std::cout << std::left << std::setw(34) << r.name << std::setw(6) << (r.pass ? "PASS" : "FAIL") << "  "
                  << std::fixed << std::setprecision(2) << std::setw(7) << r.seconds << "  " << r.detail << "\n";
        std::cout.unsetf(std::ios::fixed);
        ok = ok && r.pass;
    }
    return ok ? 0 : 1;
}

/// Final accuracy means from earlier runs under the output root, if present.
std::optional<double> recorded_accuracy(const config::ExperimentConfig &cfg, fl::Variant v) {
    const auto path = config::output_root(cfg) / std::string(fl::variant_name(v)) / "summary.json";
    std::ifstream in(path);
    if (!in)
        return std::nullopt;
    try {
        const auto doc = nlohmann::json::parse(in);
        return doc.at("aggregate").at("final_eval_acc").at("mean").get<double>();
    } catch (const std::exception &) {
        return std::nullopt;
    }
}

int cmd_cost_report(const std::string &config_path, const std::string &out_path) {
    const auto cfg = config::load_config(config_path);
    const auto model = cfg.architecture == "resnet18"
                           ? cost::resnet18_cifar(cfg.classes)
                           : cost::cost_model_of(config::build_layers(cfg, true), cfg.input);
    cost::ReportSettings st;
    st.activation_sparsity = cfg.activation_sparsity;
    st.epochs = cfg.local_epochs;
    st.batch = cfg.batch_size;
    st.value_bits = cfg.value_bits;
    const double sparsities[] = {0.95, 0.9, 0.8};
    const auto rows = cost::cost_report(model, sparsities, st);

    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file)
            throw InvalidArgument("cannot write " + out_path);
    }
    std::ostream &out = out_path.empty() ? std::cout : file;
    out << "framework,mask_sparsity,mean_accuracy,memory_bits,memory_ratio,training_flops,flops_ratio,"
           "exchange_bits,exchange_ratio\n";
    for (const auto &r : rows) {
        std::optional<double> acc;
        if (r.framework == cost::Framework::FedMef && r.mask_sparsity == cfg.mask_sparsity)
            acc = recorded_accuracy(cfg, fl::Variant::FedMef);
        else if (r.framework == cost::Framework::FedTiny && r.mask_sparsity == cfg.mask_sparsity)
            acc = recorded_accuracy(cfg, fl::Variant::FedMefNoBaE);
        else if (r.framework == cost::Framework::StaticPrune && r.mask_sparsity == cfg.mask_sparsity)
            acc = recorded_accuracy(cfg, fl::Variant::StaticPrune);
        else if (r.framework == cost::Framework::FedAvg)
            acc = recorded_accuracy(cfg, fl::Variant::FedAvgDense);
        out << cost::framework_name(r.framework) << ',' << fl::format_real(r.mask_sparsity) << ','
            << (acc ? fl::format_real(*acc) : "") << ',' << fl::format_real(r.memory_bits) << ','
            << fl::format_real(r.memory_ratio) << ',' << fl::format_real(r.flops) << ','
            << fl::format_real(r.flops_ratio) << ',' << fl::format_real(r.comm_bits) << ','
            << fl::format_real(r.comm_ratio) << '\n';
    }

    // Whole-network overhead estimate, for comparison with the per-layer figure used above.
    const double s = cfg.mask_sparsity;
    const auto in = cost::cost_inputs(model, s, st);
    const double literal = cost::overhead_flops(s, static_cast<double>(model.weight_count()),
                                                static_cast<double>(model.cached_activation_count()));
    const double base = cost::training_flops(cost::Framework::FedAvg, in);
    const double tiny = cost::training_flops(cost::Framework::FedTiny, in) / base;
    const double mef = cost::training_flops(cost::Framework::FedMef, in) / base;
    const double mef_literal = cost::training_flops(cost::Framework::FedMef, *in.flops_dense, *in.flops_sparse,
                                                    literal, *in.epochs) /
                               base;
    std::cerr << "overhead at sparsity " << s << ": per-layer per-batch " << *in.overhead
              << " FLOPs/sample (FedMef - FedTiny = " << mef - tiny << "), whole-network " << literal
              << " FLOPs/sample (FedMef - FedTiny = " << mef_literal - tiny << ")\n";
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Federated dynamic-pruning simulator"};
    app.require_subcommand(1);

    std::string config_path, variant, out_path;
    std::uint64_t seed = 0;
    bool full = false;

    auto *run = app.add_subcommand("run", "train the configured variant for every seed");
    run->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
    auto *seed_opt = run->add_option("--seed", seed, "run only this seed");
    run->add_option("--variant", variant, "override the configured variant");

    auto *chk = app.add_subcommand("check", "run the oracle self-check suite");
    chk->add_flag("--full", full, "use the full trial counts");

    auto *cost_cmd = app.add_subcommand("cost-report", "memory, FLOPs and exchange table for the configured model");
    cost_cmd->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
    cost_cmd->add_option("--out", out_path, "write the CSV here instead of stdout");

    CLI11_PARSE(app, argc, argv);
    try {
        if (run->parsed())
            return cmd_run(config_path, seed_opt->count() ? std::optional<std::uint64_t>(seed) : std::nullopt,
                           variant);
        if (chk->parsed())
            return cmd_check(full);
        if (cost_cmd->parsed())
            return cmd_cost_report(config_path, out_path);
    } catch (const ConfigError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
