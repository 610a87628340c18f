#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ptri/image.hpp"
#include "ptri/slide.hpp"

namespace ptri {

enum class PatchLabel { PositiveTumor, NegativeTumor, NegativeNormal };

const char* to_string(PatchLabel label);
PatchLabel patch_label_from_string(const std::string& s);

struct Patch {
    std::string slide_id;
    int x = 0;
    int y = 0;
    int size_px = 0;
    ImageU8 pixels;
    PatchLabel label = PatchLabel::NegativeNormal;
};

struct ExtractionConfig {
    int patch_size_px = 64;
    int target_positive_tumor = 0;
    int target_negative_tumor = 0;
    int target_negative_normal = 0;
    double min_tissue_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct FoldAssignment {
    int k = 0;
    std::map<std::string, int> fold_of;
};

// Labels the square patch at (x, y). Returns nullopt when the patch is
// rejected: under-tissued, or tumor touching only its outer ring.
// tumor_mask may be null for normal slides and is required for tumor slides.
std::optional<PatchLabel> label_patch(int x, int y, int size, SlideLabel slide_label,
                                      const BinaryMask* tumor_mask, const BinaryMask& tissue_mask,
                                      double min_tissue_fraction = 0.8);

std::vector<Patch> extract_patches(const Slide& slide, const BinaryMask* tumor_mask,
                                   const BinaryMask& tissue_mask, const ExtractionConfig& config);

FoldAssignment assign_folds(const DatasetManifest& manifest, int k, std::uint64_t seed);

void write_patch_set(const std::vector<Patch>& patches, const std::filesystem::path& dir);
std::vector<Patch> read_patch_set(const std::filesystem::path& dir);

void write_fold_assignment(const FoldAssignment& folds, const std::filesystem::path& path);
FoldAssignment read_fold_assignment(const std::filesystem::path& path);

}  // namespace ptri
