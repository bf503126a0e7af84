#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fedmef/fl/output.hpp"

#include "json.hpp"

#include <sstream>

using namespace fedmef;
using namespace fedmef::fl;

namespace {

RunResult sample_run(std::uint64_t seed, double final_acc) {
    RunResult r;
    r.variant = Variant::FedMef;
    r.seed = seed;
    RoundMetrics a;
    a.round = 0;
    a.adjusted = true;
    a.train_loss = 1.25;
    a.eval_acc = 0.5;
    a.post_adjust_drop = 0.1;
    a.theta_low_norm = 0.75;
    a.mask_sparsity = 0.9;
    a.cache_bits = 100;
    a.wire_bits = 50;
    a.wire_bound_bits = 60;
    RoundMetrics b = a;
    b.round = 1;
    b.adjusted = false;
    b.eval_acc = final_acc;
    b.train_loss = 0.5;
    b.post_adjust_drop.reset();
    b.theta_low_norm.reset();
    r.rounds = {a, b};
    return r;
}

} // namespace

TEST_CASE("numbers print shortest and read back") {
    CHECK(format_real(0.1) == "0.1");
    CHECK(format_real(1.0) == "1");
    CHECK(std::stod(format_real(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("metrics CSV has the fixed header and empty optional cells") {
    const std::vector<RunResult> runs{sample_run(1, 0.75)};
    std::ostringstream out;
    write_metrics_csv(out, runs);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "round,variant,seed,train_loss,eval_acc,post_adjust_drop,theta_low_norm,mask_sparsity,cache_bits,"
                  "wire_bits");
    std::getline(in, line);
    CHECK(line == "0,FedMef,1,1.25,0.5,0.1,0.75,0.9,100,50");
    std::getline(in, line);
    CHECK(line == "1,FedMef,1,0.5,0.75,,,0.9,100,50");
}

TEST_CASE("summary holds per-seed finals with mean and stddev") {
    const std::vector<RunResult> runs{sample_run(1, 0.75), sample_run(2, 0.25)};
    const auto j = nlohmann::json::parse(summary_json(runs, "[x]\n"));
    CHECK(j["variant"] == "FedMef");
    REQUIRE(j["seeds"].size() == 2);
    CHECK(j["seeds"][0]["final_eval_acc"] == 0.75);
    CHECK(j["seeds"][1]["seed"] == 2);
    CHECK(j["seeds"][0]["wire_within_bound"] == true);
    CHECK(j["aggregate"]["final_eval_acc"]["mean"] == 0.5);
    CHECK(j["aggregate"]["final_eval_acc"]["stddev"].get<double>() == doctest::Approx(std::sqrt(0.125)));
    CHECK(j["aggregate"]["mean_post_adjust_drop"]["mean"].get<double>() == doctest::Approx(0.1));
}
