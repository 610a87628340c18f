#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ptri/image.hpp"

namespace ptri {

enum class SlideLabel { Tumor, Normal };

const char* to_string(SlideLabel label);
SlideLabel slide_label_from_string(const std::string& s);

// Tiled RGB slide. Tiles are row-major; interior tiles are exactly
// tile_size x tile_size, edge tiles are the remainder (never empty).
// Immutable after load; read_region is safe from many threads.
struct Slide {
    std::string id;
    int width_px = 0;
    int height_px = 0;
    int tile_size = 0;
    SlideLabel label = SlideLabel::Normal;
    std::vector<ImageU8> tiles;

    int tiles_x() const { return (width_px + tile_size - 1) / tile_size; }
    int tiles_y() const { return (height_px + tile_size - 1) / tile_size; }
    const ImageU8& tile(int row, int col) const { return tiles[static_cast<std::size_t>(row) * tiles_x() + col]; }

    /// Flatten the full slide into one untiled image.
    ImageU8 to_image() const;
};

// Binary tumor annotation aligned with its parent slide.
struct AnnotationMask {
    std::string slide_id;
    BinaryMask mask;
};

struct ManifestEntry {
    std::string slide_path;
    std::optional<std::string> mask_path;
    SlideLabel label = SlideLabel::Normal;
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    std::vector<ManifestEntry> entries;
};

struct SyntheticSlideSpec {
    int width_px = 1024;
    int height_px = 1024;
    int tile_size = 256;
    double tissue_fraction = 0.5;           // in (0, 1]
    int tumor_nodule_count = 0;
    int tumor_nodule_radius_min = 40;       // inclusive range, pixels
    int tumor_nodule_radius_max = 60;
    std::uint64_t seed = 0;
};

struct SyntheticSlide {
    Slide slide;
    AnnotationMask annotation;
    BinaryMask tissue_footprint;  // generator ground truth, tumor included
};

/// Slice a flat image into a tiled slide.
Slide make_slide(std::string id, const ImageU8& image, int tile_size, SlideLabel label);

/// Load a slide directory (meta.json + tile_R_C.png) or a flat PNG, which
/// becomes a single-tile normal slide named after the file.
Slide read_slide(const std::filesystem::path& path);

/// Write the slide directory format.
void write_slide(const Slide& slide, const std::filesystem::path& dir);

/// Extract exactly w x h pixels at (x, y), assembled across tile boundaries.
/// Pure; throws on out-of-bounds regions.
ImageU8 read_region(const Slide& slide, int x, int y, int w, int h);

/// Deterministic H&E-look generator: near-white background, pink tissue
/// blobs, purple tumor nodules placed as non-overlapping disks fully inside
/// tissue. The annotation marks exactly the nodule pixels.
SyntheticSlide generate_synthetic_slide(const SyntheticSlideSpec& spec);

/// Mask PNG convention: 0 = non-tumor, 255 = tumor; values >= 128 read as tumor.
BinaryMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const BinaryMask& mask, const std::filesystem::path& path);

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Manifest paths are stored as written; relative ones resolve against the
/// manifest's directory.
std::filesystem::path resolve_manifest_path(const std::filesystem::path& manifest_path, const std::string& entry_path);

}  // namespace ptri
