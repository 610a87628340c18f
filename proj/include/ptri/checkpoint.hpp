#pragma once

#include <filesystem>

#include "ptri/graph.hpp"

namespace ptri {

// Binary model file: magic "PTRI", format version, JSON header describing the
// layer stack and parameter tensors, then raw little-endian float32 blobs in
// header order.
void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph load_checkpoint(const std::filesystem::path& path);

}  // namespace ptri
