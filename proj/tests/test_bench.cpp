#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <string>
#include <vector>

#include "ptri/bench.hpp"
#include "ptri/error.hpp"
#include "ptri/zoo.hpp"

#include "oracles.hpp"

using namespace ptri;

namespace {

double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const double pos = 0.5 * static_cast<double>(xs.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

Tensor<float> random_batch(int n, int size, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t({n, size, size, 3});
    for (std::ptrdiff_t i = 0; i < t.numel(); ++i) t.data[i] = static_cast<float>(rng.uniform());
    return t;
}

}  // namespace

TEST_CASE("bench reports reproduce their own summary statistics") {
    const ModelGraph model = build(ArchitectureId::MobileMini, 32, 3);
    const Tensor<float> batch = random_batch(4, 32, 11);
    const BenchReport r = bench_inference(model, batch, 2, 12);

    CHECK(r.arch == model.name);
    CHECK(r.input_shape == std::vector<int>{4, 32, 32, 3});
    CHECK(r.batch_size == 4);
    CHECK(r.warmup_batches == 2);
    CHECK(r.measured_batches == 12);
    REQUIRE(r.batch_times_ms.size() == 12);
    for (double t : r.batch_times_ms) REQUIRE(t > 0.0);

    CHECK(r.ms_per_step == median_of(r.batch_times_ms));
    std::vector<double> sorted = r.batch_times_ms;
    std::sort(sorted.begin(), sorted.end());
    const auto quant = [&sorted](double q) {
        const double pos = q * static_cast<double>(sorted.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        return sorted[lo] * (1.0 - frac) + sorted[std::min(lo + 1, sorted.size() - 1)] * frac;
    };
    CHECK(r.iqr_ms == quant(0.75) - quant(0.25));

    SUBCASE("the median shrugs off one wild outlier, the mean does not") {
        std::vector<double> spiked = r.batch_times_ms;
        *std::max_element(spiked.begin(), spiked.end()) *= 10.0;
        const double med_shift =
            std::abs(median_of(spiked) - r.ms_per_step) / r.ms_per_step;
        CHECK(med_shift < 0.05);

        double mean = 0.0, spiked_mean = 0.0;
        for (double t : r.batch_times_ms) mean += t;
        for (double t : spiked) spiked_mean += t;
        mean /= 12.0;
        spiked_mean /= 12.0;
        CHECK((spiked_mean - mean) / mean > med_shift);
    }
}

TEST_CASE("benchmarking leaves the model untouched") {
    const ModelGraph model = build(ArchitectureId::MobileMini, 32, 7);
    const Tensor<float> probe = random_batch(2, 32, 21);
    const Tensor<float> before = model.forward(probe);
    (void)bench_inference(model, random_batch(4, 32, 22), 1, 10);
    const Tensor<float> after = model.forward(probe);
    REQUIRE(before.numel() == after.numel());
    CHECK(std::memcmp(before.ptr(), after.ptr(),
                      static_cast<std::size_t>(before.numel()) * sizeof(float)) == 0);
}

TEST_CASE("architecture comparison sorts four rows fastest first") {
    const auto reports = compare_archs(32, 2, 17, 1, 10);
    REQUIRE(reports.size() == 4);
    std::set<std::string> names;
    for (const auto& r : reports) {
        names.insert(r.arch);
        CHECK(r.measured_batches == 10);
        CHECK(r.batch_size == 2);
    }
    const std::set<std::string> want{
        to_string(ArchitectureId::MobileMini), to_string(ArchitectureId::VggMini),
        to_string(ArchitectureId::Res50Mini), to_string(ArchitectureId::Res101Mini)};
    CHECK(names == want);
    for (std::size_t i = 1; i < reports.size(); ++i)
        CHECK(reports[i - 1].ms_per_step <= reports[i].ms_per_step);
}

TEST_CASE("quadrupled batches cost more wall time per step") {
    const ModelGraph model = build(ArchitectureId::MobileMini, 32, 9);
    const BenchReport one = bench_inference(model, random_batch(1, 32, 31), 2, 11);
    const BenchReport four = bench_inference(model, random_batch(4, 32, 32), 2, 11);
    CHECK(four.ms_per_step > one.ms_per_step);
}

TEST_CASE("bench tables report reduction against the slowest row") {
    BenchReport fast;
    fast.arch = "mobile";
    fast.batch_size = 8;
    fast.ms_per_step = 15.0;
    fast.iqr_ms = 0.5;
    BenchReport slow = fast;
    slow.arch = "vgg";
    slow.ms_per_step = 48.0;

    const std::string table = bench_table({fast, slow});
    CHECK(table.find("ms/step") != std::string::npos);
    CHECK(table.find("mobile") != std::string::npos);
    CHECK(table.find("68.8") != std::string::npos);  // (48-15)/48
    CHECK(table.find("0.0%") != std::string::npos);  // slowest vs itself
    CHECK(std::count(table.begin(), table.end(), '\n') == 3);
    CHECK_THROWS_AS(bench_table({}), Error);
}

TEST_CASE("bench preconditions are enforced") {
    const ModelGraph model = build(ArchitectureId::MobileMini, 32, 3);
    const Tensor<float> batch = random_batch(2, 32, 41);
    CHECK_THROWS_AS(bench_inference(model, batch, 2, 9), Error);
    CHECK_THROWS_AS(bench_inference(model, batch, -1, 10), Error);
    CHECK_THROWS_AS(bench_inference(model, random_batch(2, 16, 42), 1, 10), Error);
    CHECK_THROWS_AS(compare_archs(32, 0, 1, 1, 10), Error);
    try {
        bench_inference(model, batch, 2, 9);
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::Data);
    }
}
