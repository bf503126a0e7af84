#include "fedmef/fl/output.hpp"

#include "fedmef/errors.hpp"

#include "json.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

namespace fedmef::fl {

std::string format_real(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

namespace {

std::string opt(const std::optional<double> &v) { return v ? format_real(*v) : std::string(); }

std::ofstream open_out(const std::filesystem::path &p) {
    std::ofstream out(p);
    if (!out)
        throw InvalidArgument("cannot write " + p.string());
    return out;
}

struct Finals {
    double final_acc = 0.0;
    double final_loss = 0.0;
    double initial_loss = 0.0;
    double mean_drop = 0.0;
    double mean_theta_low = 0.0;
    double max_cache_bits = 0.0;
    double max_wire_bits = 0.0;
    double max_wire_bytes = 0.0;
    bool wire_within_bound = true;
    std::size_t adjustments = 0;
};

Finals finals_of(const RunResult &r) {
    Finals f;
    if (r.rounds.empty())
        return f;
    f.final_acc = r.rounds.back().eval_acc;
    f.final_loss = r.rounds.back().train_loss;
    f.initial_loss = r.rounds.front().train_loss;
    double drop = 0.0, norm = 0.0;
    for (const auto &m : r.rounds) {
        if (m.post_adjust_drop) {
            drop += *m.post_adjust_drop;
            norm += m.theta_low_norm.value_or(0.0);
            ++f.adjustments;
        }
        f.max_cache_bits = std::max(f.max_cache_bits, static_cast<double>(m.cache_bits));
        f.max_wire_bits = std::max(f.max_wire_bits, static_cast<double>(m.wire_bits));
        f.max_wire_bytes = std::max(f.max_wire_bytes, static_cast<double>(m.wire_bytes));
        f.wire_within_bound = f.wire_within_bound && m.wire_bits <= m.wire_bound_bits;
    }
    if (f.adjustments) {
        f.mean_drop = drop / static_cast<double>(f.adjustments);
        f.mean_theta_low = norm / static_cast<double>(f.adjustments);
    }
    return f;
}

} // namespace

void write_metrics_csv(std::ostream &out, std::span<const RunResult> runs) {
    out << kMetricsHeader << '\n';
    for (const auto &run : runs) {
        const std::string variant(variant_name(run.variant));
        for (const auto &m : run.rounds) {
            out << m.round << ',' << variant << ',' << run.seed << ',' << format_real(m.train_loss) << ','
                << format_real(m.eval_acc) << ',' << opt(m.post_adjust_drop) << ',' << opt(m.theta_low_norm) << ','
                << format_real(m.mask_sparsity) << ',' << m.cache_bits << ',' << m.wire_bits << '\n';
        }
    }
}

void write_run_directory(const std::filesystem::path &dir, const RunResult &run) {
    std::filesystem::create_directories(dir);
    {
        auto out = open_out(dir / "metrics.csv");
        write_metrics_csv(out, std::span<const RunResult>(&run, 1));
    }
    {
        auto out = open_out(dir / "cache_telemetry.csv");
        out << "round,layer,dense_bits,cache_bits,achieved_sparsity\n";
        for (const auto &row : run.cache_rows)
            out << row.round << ',' << row.record.layer << ',' << row.record.dense_bits << ','
                << row.record.cache_bits << ',' << format_real(row.record.achieved_sparsity) << '\n';
    }
    {
        auto out = open_out(dir / "extrusion.csv");
        out << "round,client,step,theta_low_norm,eta,beta,mu\n";
        for (const auto &row : run.extrusion_rows)
            out << row.round << ',' << row.client << ',' << row.state.step << ','
                << format_real(row.state.theta_low_norm) << ',' << format_real(row.state.eta) << ','
                << format_real(row.state.beta) << ',' << format_real(row.state.mu) << '\n';
    }
    {
        auto out = open_out(dir / "adjustments.csv");
        out << "round,zeta,layer,dropped,grown,sparsity_before,sparsity_after,acc_before,acc_after,"
               "theta_low_norm,marked_overlap,nonzero_grown\n";
        for (const auto &rec : run.adjustments)
            for (const auto &la : rec.layers)
                out << rec.round << ',' << format_real(rec.zeta) << ',' << la.layer << ',' << la.dropped.size()
                    << ',' << la.grown.size() << ',' << format_real(la.sparsity_before) << ','
                    << format_real(la.sparsity_after) << ',' << format_real(rec.acc_before) << ','
                    << format_real(rec.acc_after) << ',' << format_real(rec.theta_low_norm) << ','
                    << format_real(rec.marked_overlap) << ',' << rec.nonzero_grown << '\n';
    }
}

std::string summary_json(std::span<const RunResult> runs, const std::string &config_text) {
    using nlohmann::ordered_json;
    ordered_json doc;
    doc["variant"] = runs.empty() ? "" : std::string(variant_name(runs.front().variant));
    doc["config"] = config_text;
    ordered_json seeds = ordered_json::array();
    std::vector<Finals> all;
    for (const auto &r : runs) {
        const auto f = finals_of(r);
        all.push_back(f);
        ordered_json s;
        s["seed"] = r.seed;
        s["rounds"] = r.rounds.size();
        s["final_eval_acc"] = f.final_acc;
        s["final_train_loss"] = f.final_loss;
        s["initial_train_loss"] = f.initial_loss;
        s["adjustments"] = f.adjustments;
        s["mean_post_adjust_drop"] = f.mean_drop;
        s["mean_theta_low_norm"] = f.mean_theta_low;
        s["max_cache_bits"] = f.max_cache_bits;
        s["max_wire_bits"] = f.max_wire_bits;
        s["max_wire_bytes"] = f.max_wire_bytes;
        s["wire_within_bound"] = f.wire_within_bound;
        s["shard_sizes"] = r.shard_sizes;
        seeds.push_back(s);
    }
    doc["seeds"] = seeds;

    auto stats = [&](auto field) {
        ordered_json o;
        const double n = static_cast<double>(all.size());
        double mean = 0.0;
        for (const auto &f : all)
            mean += field(f);
        mean = all.empty() ? 0.0 : mean / n;
        double var = 0.0;
        for (const auto &f : all)
            var += (field(f) - mean) * (field(f) - mean);
        o["mean"] = mean;
        o["stddev"] = all.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
        return o;
    };
    ordered_json agg;
    agg["final_eval_acc"] = stats([](const Finals &f) { return f.final_acc; });
    agg["final_train_loss"] = stats([](const Finals &f) { return f.final_loss; });
    agg["mean_post_adjust_drop"] = stats([](const Finals &f) { return f.mean_drop; });
    agg["mean_theta_low_norm"] = stats([](const Finals &f) { return f.mean_theta_low; });
    agg["max_cache_bits"] = stats([](const Finals &f) { return f.max_cache_bits; });
    agg["max_wire_bits"] = stats([](const Finals &f) { return f.max_wire_bits; });
    doc["aggregate"] = agg;
    return doc.dump(2) + "\n";
}

} // namespace fedmef::fl
