#include "ptri/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace ptri {

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

BenchReport bench_inference(const ModelGraph& model, const Tensor<float>& batch, int warmup,
                            int reps) {
    if (reps < 10) throw_data("bench: need at least 10 measured batches");
    if (warmup < 0) throw_data("bench: negative warmup");
    if (batch.rank() != 4 || batch.dim(1) != model.input_size || batch.dim(2) != model.input_size ||
        batch.dim(3) != model.input_channels)
        throw_data("bench: batch shape does not match model input");

    using clock = std::chrono::steady_clock;
    for (int i = 0; i < warmup; ++i) (void)model.forward(batch);

    BenchReport report;
    report.arch = model.name;
    report.input_shape = batch.shape;
    report.batch_size = batch.dim(0);
    report.warmup_batches = warmup;
    report.measured_batches = reps;
    report.batch_times_ms.reserve(static_cast<std::size_t>(reps));
    for (int i = 0; i < reps; ++i) {
        const auto t0 = clock::now();
        (void)model.forward(batch);
        const auto t1 = clock::now();
        report.batch_times_ms.push_back(
            std::chrono::duration<double, std::milli>(t1 - t0).count());
    }

    std::vector<double> sorted = report.batch_times_ms;
    std::sort(sorted.begin(), sorted.end());
    report.ms_per_step = quantile_sorted(sorted, 0.5);
    report.iqr_ms = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);

    // One timer tick per clock::period; a median below 10 ticks cannot be
    // trusted.
    const double tick_ms =
        1e3 * static_cast<double>(clock::period::num) / static_cast<double>(clock::period::den);
    if (report.ms_per_step < 10.0 * tick_ms)
        throw_numeric("bench: timer resolution too coarse for this step time; use a larger batch");
    return report;
}

std::vector<BenchReport> compare_archs(int input_size, int batch_size, std::uint64_t seed,
                                       int warmup, int reps) {
    if (batch_size < 1) throw_data("bench: batch size must be positive");

    Tensor<float> batch({batch_size, input_size, input_size, 3});
    Rng rng(seed);
    for (std::ptrdiff_t i = 0; i < batch.numel(); ++i)
        batch.data[i] = static_cast<float>(rng.uniform());

    std::vector<BenchReport> reports;
    for (ArchitectureId arch : {ArchitectureId::MobileMini, ArchitectureId::VggMini,
                                ArchitectureId::Res50Mini, ArchitectureId::Res101Mini}) {
        const ModelGraph model = build(arch, input_size, seed);
        reports.push_back(bench_inference(model, batch, warmup, reps));
    }
    std::sort(reports.begin(), reports.end(),
              [](const BenchReport& a, const BenchReport& b) { return a.ms_per_step < b.ms_per_step; });
    return reports;
}

std::string bench_table(const std::vector<BenchReport>& reports) {
    if (reports.empty()) throw_data("bench table: no reports");
    const double slowest =
        std::max_element(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
            return a.ms_per_step < b.ms_per_step;
        })->ms_per_step;

    std::string out = "arch      batch   ms/step       iqr    vs slowest\n";
    char line[128];
    for (const BenchReport& r : reports) {
        const double reduction = slowest > 0.0 ? (slowest - r.ms_per_step) / slowest * 100.0 : 0.0;
        std::snprintf(line, sizeof(line), "%-8s %6d %9.3f %9.3f      -%5.1f%%\n", r.arch.c_str(),
                      r.batch_size, r.ms_per_step, r.iqr_ms, reduction);
        out += line;
    }
    return out;
}

}  // namespace ptri
