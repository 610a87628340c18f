#pragma once

#include <cstdint>
#include <string>

#include "ptri/graph.hpp"

namespace ptri {

enum class ArchitectureId { MobileMini, VggMini, Res50Mini, Res101Mini };

const char* to_string(ArchitectureId arch);
ArchitectureId architecture_from_string(const std::string& s);

// Builds a desk-scale network with seeded initial weights. Valid input sizes
// are 32, 64, and 96 (square RGB).
ModelGraph build(ArchitectureId arch, int input_size, std::uint64_t seed);

std::ptrdiff_t param_count(const ModelGraph& model);

// Multiply-accumulate count for one sample at the given input size.
long long flops_estimate(const ModelGraph& model, int input_size);

}  // namespace ptri
