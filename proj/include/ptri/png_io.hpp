#pragma once

#include <filesystem>

#include "ptri/image.hpp"

namespace ptri {

/// Decode a PNG file to an 8-bit gray or RGB image (palette/16-bit/alpha
/// inputs are normalized; alpha is dropped).
ImageU8 read_png(const std::filesystem::path& path);

/// Encode an 8-bit gray (1-channel) or RGB (3-channel) image. Fixed encoder
/// settings, so identical pixels produce identical files.
void write_png(const std::filesystem::path& path, const ImageU8& image);

}  // namespace ptri
