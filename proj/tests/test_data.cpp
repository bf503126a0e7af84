#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fedmef/data/dataset.hpp"
#include "fedmef/errors.hpp"

#include <filesystem>
#include <fstream>

using namespace fedmef;
using namespace fedmef::data;

namespace {

std::filesystem::path temp_file(const std::string &name) {
    return std::filesystem::temp_directory_path() / ("fedmef_test_" + name);
}

void write(const std::filesystem::path &p, const std::string &text) {
    std::ofstream(p) << text;
}

} // namespace

TEST_CASE("synthetic blobs") {
    const auto a = synth_blobs(3, 5, {1, 8, 8}, 0.2, 7);
    CHECK(a.size() == 15);
    CHECK(a.classes == 3);
    CHECK(a == synth_blobs(3, 5, {1, 8, 8}, 0.2, 7));
    CHECK_FALSE(a == synth_blobs(3, 5, {1, 8, 8}, 0.2, 8));
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a.labels[i] == static_cast<int>(i / 5));
    for (float v : a.values) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    // Without noise every sample is its class template, and templates differ.
    const auto clean = synth_blobs(3, 2, {1, 8, 8}, 0.0, 1);
    CHECK(std::equal(clean.sample(0).begin(), clean.sample(0).end(), clean.sample(1).begin()));
    CHECK_FALSE(std::equal(clean.sample(0).begin(), clean.sample(0).end(), clean.sample(2).begin()));
    CHECK_NOTHROW(a.validate());
}

TEST_CASE("batches gather in the given order") {
    const auto d = synth_blobs(2, 3, {2, 2, 2}, 0.1, 3);
    const std::size_t idx[] = {4, 1};
    const auto b = d.batch<double>(idx);
    CHECK(b.dims == nn::Dims4{2, 2, 2, 2});
    for (std::size_t j = 0; j < 8; ++j) {
        CHECK(b.data[j] == static_cast<double>(d.sample(4)[j]));
        CHECK(b.data[8 + j] == static_cast<double>(d.sample(1)[j]));
    }
    CHECK(d.batch_labels(idx) == std::vector<int>{1, 0});
}

TEST_CASE("CSV round trip is exact") {
    const auto d = synth_blobs(3, 4, {1, 3, 3}, 0.3, 5);
    const auto p = temp_file("roundtrip.csv");
    save_csv(d, p);
    const auto back = load_csv(p, {1, 3, 3}, 3, ValueRange::Unit);
    CHECK(back == d);
    std::filesystem::remove(p);
}

TEST_CASE("CSV value ranges and errors") {
    const auto p = temp_file("bytes.csv");
    write(p, "1,0,255,51,102\n0,0,0,0,0\n");
    const auto d = load_csv(p, {1, 2, 2});
    CHECK(d.classes == 2);
    CHECK(d.values[1] == doctest::Approx(1.0));
    CHECK(d.values[2] == doctest::Approx(0.2));

    write(p, "0,0.5,0.5,0.5,0.5\n1,0.5,x,0.5,0.5\n");
    try {
        (void)load_csv(p, {1, 2, 2});
        FAIL("expected ParseError");
    } catch (const ParseError &e) {
        CHECK(e.line() == 2);
    }
    write(p, "0,0.5,0.5,0.5\n");
    CHECK_THROWS_AS(load_csv(p, {1, 2, 2}), ParseError);
    write(p, "0,0.5,0.5,0.5,300\n");
    CHECK_THROWS_AS(load_csv(p, {1, 2, 2}), ParseError);
    write(p, "5,0.5,0.5,0.5,0.5\n");
    CHECK_THROWS_AS(load_csv(p, {1, 2, 2}, 3), ParseError);
    std::filesystem::remove(p);
    CHECK_THROWS(load_csv(temp_file("missing.csv"), {1, 2, 2}));
}
