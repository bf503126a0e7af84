// Acceptance suite: one pass/fail line per criterion, exit status 0 only when all pass.
// Usage: acceptance <desk config> [--quick]

#include "fedmef/bae/extrusion.hpp"
#include "fedmef/check/self_check.hpp"
#include "fedmef/config/experiment.hpp"
#include "fedmef/cost/cost_model.hpp"
#include "fedmef/fl/simulator.hpp"
#include "fedmef/nn/network.hpp"
#include "fedmef/sap/activation_cache.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

using namespace fedmef;

namespace {

struct Outcome {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Outcome from_check(int id, const check::CheckResult &r) { return {id, r.name, r.pass, r.detail, r.seconds}; }

double mean(const std::vector<double> &v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Desk runs shared by criteria 6 and 7, keyed by arm then seed.
struct DeskRuns {
    std::map<std::string, std::vector<fl::RunResult>> arms;
    std::map<std::string, double> max_seconds;
};

DeskRuns run_desk(const config::ExperimentConfig &base, const std::vector<std::uint64_t> &seeds) {
    DeskRuns out;
    struct Arm {
        std::string name;
        fl::Variant variant;
        bool zero_lambda;
    };
    const Arm arms[] = {{"fedmef", fl::Variant::FedMef, false},
                        {"fedmef_lambda0", fl::Variant::FedMef, true},
                        {"nobae", fl::Variant::FedMefNoBaE, false}};
    for (const auto &arm : arms) {
        auto cfg = base;
        cfg.variant = arm.variant;
        if (arm.zero_lambda)
            cfg.lambda = 0.0;
        double worst = 0.0;
        for (auto s : seeds) {
            const auto [train, test] = fl::load_datasets(cfg, s);
            const auto t0 = Clock::now();
            out.arms[arm.name].push_back(fl::run(cfg, s, train, test));
            worst = std::max(worst, since(t0));
        }
        out.max_seconds[arm.name] = worst;
    }
    return out;
}

Outcome protocol_invariants(const config::ExperimentConfig &cfg, const DeskRuns &runs) {
    Outcome o{6, "protocol invariants over desk runs", false, {}, 0.0};
    const auto t0 = Clock::now();
    std::size_t adjustments = 0, bad_sparsity = 0, nonzero_grown = 0, rounds = 0, over_bound = 0;
    double worst_sparsity_error = 0.0, worst_ratio = 0.0;
    for (const auto &r : runs.arms.at("fedmef")) {
        for (const auto &a : r.adjustments) {
            ++adjustments;
            const double err = std::abs(a.sparsity_after - cfg.mask_sparsity);
            worst_sparsity_error = std::max(worst_sparsity_error, err);
            bad_sparsity += err > 1e-12 ? 1 : 0;
            nonzero_grown += a.nonzero_grown;
        }
        for (const auto &m : r.rounds) {
            ++rounds;
            over_bound += m.wire_bits > m.wire_bound_bits ? 1 : 0;
            worst_ratio = std::max(worst_ratio, static_cast<double>(m.wire_bits) / static_cast<double>(m.wire_bound_bits));
        }
    }
    const double secs = runs.max_seconds.at("fedmef");
    std::ostringstream os;
    os << adjustments << " adjustments: sparsity off target " << bad_sparsity << " (max error " << worst_sparsity_error
       << "), nonzero grown weights " << nonzero_grown << "; " << rounds << " rounds: wire above bound " << over_bound
       << " (max wire/bound " << worst_ratio << "); slowest run " << secs << " s (limit 600)";
    o.pass = adjustments > 0 && bad_sparsity == 0 && nonzero_grown == 0 && over_bound == 0 && secs < 600.0;
    o.detail = os.str();
    o.seconds = since(t0) + secs;
    return o;
}

Outcome extrusion_efficacy(const DeskRuns &runs) {
    Outcome o{7, "budget-aware extrusion efficacy", false, {}, 0.0};
    const auto &mef = runs.arms.at("fedmef");
    const auto &zero = runs.arms.at("fedmef_lambda0");
    const auto &nobae = runs.arms.at("nobae");

    // (a) per seed, every adjustment round that marked anything.
    std::size_t compared = 0, not_smaller = 0, seeds_ok = 0;
    for (std::size_t s = 0; s < mef.size(); ++s) {
        bool ok = true;
        for (std::size_t i = 0; i < mef[s].adjustments.size() && i < zero[s].adjustments.size(); ++i) {
            const auto &a = mef[s].adjustments[i];
            const auto &b = zero[s].adjustments[i];
            if (b.theta_low_norm == 0.0 && a.theta_low_norm == 0.0)
                continue; // nothing marked (rate rounds to zero)
            ++compared;
            if (!(a.theta_low_norm < b.theta_low_norm)) {
                ++not_smaller;
                ok = false;
            }
        }
        seeds_ok += ok ? 1 : 0;
    }
    const bool a_ok = compared > 0 && not_smaller == 0;

    auto drops = [](const std::vector<fl::RunResult> &rs) {
        std::vector<double> v;
        for (const auto &r : rs)
            for (const auto &a : r.adjustments)
                v.push_back(a.acc_before - a.acc_after);
        return v;
    };
    auto finals = [](const std::vector<fl::RunResult> &rs) {
        std::vector<double> v;
        for (const auto &r : rs)
            v.push_back(r.rounds.back().eval_acc);
        return v;
    };
    const double drop_mef = mean(drops(mef)), drop_nobae = mean(drops(nobae));
    const double acc_mef = mean(finals(mef)), acc_nobae = mean(finals(nobae));
    const bool b_ok = drop_mef < drop_nobae;
    const bool c_ok = acc_mef >= acc_nobae;

    std::ostringstream os;
    os << mef.size() << " seeds. (a) " << (a_ok ? "ok" : "FAIL") << ": |theta_low| smaller with lambda>0 in "
       << compared - not_smaller << "/" << compared << " adjustment rounds, " << seeds_ok << "/" << mef.size()
       << " seeds clean. (b) " << (b_ok ? "ok" : "FAIL") << ": mean post-adjustment drop " << drop_mef
       << " vs no-BaE " << drop_nobae << ". (c) " << (c_ok ? "ok" : "FAIL") << ": mean final accuracy " << acc_mef
       << " vs no-BaE " << acc_nobae;
    o.pass = mef.size() >= 5 && a_ok && b_ok && c_ok;
    o.detail = os.str();
    double secs = 0.0;
    for (const auto &[k, v] : runs.max_seconds)
        secs += v * static_cast<double>(mef.size());
    o.seconds = secs;
    return o;
}

Outcome cache_memory(const config::ExperimentConfig &base) {
    Outcome o{8, "activation cache memory", false, {}, 0.0};
    const auto t0 = Clock::now();
    auto cfg = base;
    cfg.variant = fl::Variant::FedMef;
    const auto model = fl::initial_model(cfg, 1);
    const auto [train, test] = fl::load_datasets(cfg, 1);
    std::vector<std::size_t> idx(std::min(cfg.batch_size, train.size()));
    std::iota(idx.begin(), idx.end(), 0);
    nn::ForwardOptions fo;
    fo.sap.target_sparsity = 0.9;
    fo.value_bits = cfg.value_bits;
    const auto fr = nn::forward(model, train.batch<float>(idx), fo);

    std::uint64_t expected = 0, sign = 0;
    for (const auto &lt : fr.trace.layers) {
        if (const auto *c = std::get_if<sap::ActivationCache<float>>(&lt.input))
            expected += sap::cache_storage_bits(*c, cfg.value_bits, false);
        sign += lt.relu_sign.size();
    }
    expected += sign;
    const auto &bits = fr.trace.bits;
    const double factor = static_cast<double>(bits.dense) / static_cast<double>(bits.cached);
    std::ostringstream os;
    os << "batch " << idx.size() << ": cached " << bits.cached << " bits (sign " << bits.sign << ") vs dense "
       << bits.dense << " bits, " << factor << "x smaller; independent total " << expected;
    o.pass = factor >= 3.0 && bits.cached == expected && bits.sign == sign;
    o.detail = os.str();
    o.seconds = since(t0);
    return o;
}

Outcome cost_ratios() {
    Outcome o{9, "training FLOPs ratios for ResNet18", false, {}, 0.0};
    const auto t0 = Clock::now();
    const auto model = cost::resnet18_cifar();
    cost::ReportSettings st;
    st.epochs = 10;
    st.activation_sparsity = 0.9;
    const double s = 0.9;
    const auto in = cost::cost_inputs(model, s, st);
    const double avg = cost::training_flops(cost::Framework::FedAvg, in);
    const double tiny = cost::training_flops(cost::Framework::FedTiny, in) / avg;
    const double mef = cost::training_flops(cost::Framework::FedMef, in) / avg;
    const double whole = cost::overhead_flops(s, static_cast<double>(model.weight_count()),
                                              static_cast<double>(model.cached_activation_count()));
    const double mef_whole =
        cost::training_flops(cost::Framework::FedMef, *in.flops_dense, *in.flops_sparse, whole, *in.epochs) / avg;
    std::ostringstream os;
    os << "FedMef " << mef << "x, FedTiny-like " << tiny << "x, difference " << mef - tiny
       << " (whole-network overhead estimate would give " << mef_whole - tiny << ")";
    o.pass = mef >= 0.05 && mef <= 0.25 && mef - tiny < 0.01;
    o.detail = os.str();
    o.seconds = since(t0);
    return o;
}

Outcome batch_one(const config::ExperimentConfig &base, const std::vector<std::uint64_t> &seeds) {
    Outcome o{10, "batch size 1", false, {}, 0.0};
    const auto t0 = Clock::now();
    auto cfg = base;
    cfg.variant = fl::Variant::FedMef;
    cfg.batch_size = 1;
    std::ostringstream os;
    bool ok = true;
    for (auto s : seeds) {
        const auto [train, test] = fl::load_datasets(cfg, s);
        const auto r = fl::run(cfg, s, train, test);
        const double first = r.rounds.front().train_loss, last = r.rounds.back().train_loss;
        ok = ok && std::isfinite(last) && last < first;
        os << "seed " << s << ": " << first << " -> " << last << "; ";
    }
    o.pass = ok;
    o.detail = os.str();
    o.seconds = since(t0);
    return o;
}

} // namespace

int main(int argc, char **argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <desk config> [--quick]\n";
        return 2;
    }
    const bool quick = argc > 2 && std::strcmp(argv[2], "--quick") == 0;
    config::ExperimentConfig cfg;
    try {
        cfg = config::load_config(argv[1]);
        config::validate(cfg);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::vector<std::uint64_t> seeds = cfg.seeds;
    for (std::uint64_t s = 1; seeds.size() < 5; ++s)
        if (std::find(seeds.begin(), seeds.end(), s) == seeds.end())
            seeds.push_back(s);

    std::vector<Outcome> results;
    auto report = [&](Outcome o) {
        std::cout << "criterion " << o.id << " " << (o.pass ? "PASS" : "FAIL") << " " << o.name << " ["
                  << o.seconds << " s]: " << o.detail << std::endl;
        results.push_back(std::move(o));
    };

    {
        auto r = from_check(1, check::check_gradients(17));
        r.pass = r.pass && r.seconds < 60.0;
        report(r);
    }
    report(from_check(2, check::check_nsconv(quick ? 2000 : 10000, 23)));
    report(from_check(3, check::check_sap(1000, 29)));
    report(from_check(4, check::check_codec(10000, 31)));
    report(from_check(5, check::check_schedule()));
    const auto desk = run_desk(cfg, seeds);
    report(protocol_invariants(cfg, desk));
    report(extrusion_efficacy(desk));
    report(cache_memory(cfg));
    report(cost_ratios());
    report(batch_one(cfg, seeds));

    const auto passed = std::count_if(results.begin(), results.end(), [](const Outcome &o) { return o.pass; });
    std::cout << passed << "/" << results.size() << " criteria passed" << std::endl;
    return passed == static_cast<std::ptrdiff_t>(results.size()) ? 0 : 1;
}
