#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptri/graph.hpp"
#include "ptri/zoo.hpp"

namespace ptri {

struct BenchReport {
    std::string arch;
    std::vector<int> input_shape;
    int batch_size = 0;
    int warmup_batches = 0;
    int measured_batches = 0;
    std::vector<double> batch_times_ms;
    double ms_per_step = 0.0;  // median over measured batches
    double iqr_ms = 0.0;
};

// Times repeated forward passes on one fixed batch; warmup runs are not
// recorded. Measurement is sequential on the calling thread.
BenchReport bench_inference(const ModelGraph& model, const Tensor<float>& batch, int warmup = 5,
                            int reps = 30);

// Benchmarks all four architectures on one shared random batch, slowest last.
std::vector<BenchReport> compare_archs(int input_size, int batch_size, std::uint64_t seed,
                                       int warmup = 5, int reps = 30);

// Aligned text table with per-row reduction relative to the slowest entry.
std::string bench_table(const std::vector<BenchReport>& reports);

}  // namespace ptri
