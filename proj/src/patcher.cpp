#include "ptri/patcher.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ptri/error.hpp"
#include "ptri/png_io.hpp"
#include "ptri/rng.hpp"

namespace fs = std::filesystem;

namespace ptri {

const char* to_string(PatchLabel label) {
    switch (label) {
        case PatchLabel::PositiveTumor: return "positive_tumor";
        case PatchLabel::NegativeTumor: return "negative_tumor";
        case PatchLabel::NegativeNormal: return "negative_normal";
    }
    throw_data("corrupt patch label");
}

PatchLabel patch_label_from_string(const std::string& s) {
    if (s == "positive_tumor") return PatchLabel::PositiveTumor;
    if (s == "negative_tumor") return PatchLabel::NegativeTumor;
    if (s == "negative_normal") return PatchLabel::NegativeNormal;
    throw_data("unknown patch label: " + s);
}

namespace {

std::size_t count_in_window(const BinaryMask& mask, int x0, int y0, int w, int h) {
    std::size_t n = 0;
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) n += mask.at(x, y);
    return n;
}

}  // namespace

std::optional<PatchLabel> label_patch(int x, int y, int size, SlideLabel slide_label,
                                      const BinaryMask* tumor_mask, const BinaryMask& tissue_mask,
                                      double min_tissue_fraction) {
    if (size <= 0) throw_data("label_patch: non-positive patch size");
    if (x < 0 || y < 0 || x + size > tissue_mask.width || y + size > tissue_mask.height)
        throw_data("label_patch: patch out of bounds");
    if (slide_label == SlideLabel::Tumor) {
        if (!tumor_mask) throw_data("label_patch: tumor slide without tumor mask");
        if (tumor_mask->width != tissue_mask.width || tumor_mask->height != tissue_mask.height)
            throw_data("label_patch: mask dimension mismatch");
    }

    const std::size_t tissue_px = count_in_window(tissue_mask, x, y, size, size);
    const double tissue_fraction = static_cast<double>(tissue_px) / (static_cast<double>(size) * size);
    if (tissue_fraction < min_tissue_fraction) return std::nullopt;

    if (slide_label == SlideLabel::Normal) return PatchLabel::NegativeNormal;

    const int half = size / 2, quarter = size / 4;
    if (count_in_window(*tumor_mask, x + quarter, y + quarter, half, half) > 0)
        return PatchLabel::PositiveTumor;
    if (count_in_window(*tumor_mask, x, y, size, size) == 0) return PatchLabel::NegativeTumor;
    return std::nullopt;
}

std::vector<Patch> extract_patches(const Slide& slide, const BinaryMask* tumor_mask,
                                   const BinaryMask& tissue_mask, const ExtractionConfig& config) {
    const int size = config.patch_size_px;
    if (size <= 0) throw_data("extract_patches: non-positive patch size");
    if (size > slide.width_px || size > slide.height_px)
        throw_data("extract_patches: patch size exceeds slide dimensions");
    if (tissue_mask.width != slide.width_px || tissue_mask.height != slide.height_px)
        throw_data("extract_patches: tissue mask does not match slide dimensions");
    if (config.target_positive_tumor < 0 || config.target_negative_tumor < 0 ||
        config.target_negative_normal < 0)
        throw_data("extract_patches: negative class target");
    if (slide.label == SlideLabel::Normal &&
        (config.target_positive_tumor > 0 || config.target_negative_tumor > 0))
        throw_data("extract_patches: tumor-class targets on a normal slide");
    if (slide.label == SlideLabel::Tumor && config.target_negative_normal > 0)
        throw_data("extract_patches: negative_normal target on a tumor slide");

    const long total_target = static_cast<long>(config.target_positive_tumor) +
                              config.target_negative_tumor + config.target_negative_normal;
    if (total_target == 0) return {};

    const Box bbox = mask_bbox(tissue_mask);
    if (bbox.empty()) throw_data("extract_patches: slide has no tissue");
    const int x_lo = std::clamp(bbox.x0, 0, slide.width_px - size);
    const int x_hi = std::clamp(bbox.x1, x_lo, slide.width_px - size);
    const int y_lo = std::clamp(bbox.y0, 0, slide.height_px - size);
    const int y_hi = std::clamp(bbox.y1, y_lo, slide.height_px - size);

    Rng rng(config.seed);
    std::vector<Patch> out;
    out.reserve(static_cast<std::size_t>(total_target));
    long have_pos = 0, have_neg_t = 0, have_neg_n = 0;
    const long budget = total_target * 100;
    for (long attempt = 0; attempt < budget; ++attempt) {
        if (have_pos >= config.target_positive_tumor && have_neg_t >= config.target_negative_tumor &&
            have_neg_n >= config.target_negative_normal)
            break;
        const int x = static_cast<int>(rng.uniform_int(x_lo, x_hi));
        const int y = static_cast<int>(rng.uniform_int(y_lo, y_hi));
        const auto label =
            label_patch(x, y, size, slide.label, tumor_mask, tissue_mask, config.min_tissue_fraction);
        if (!label) continue;
        long* have = nullptr;
        long target = 0;
        switch (*label) {
            case PatchLabel::PositiveTumor: have = &have_pos; target = config.target_positive_tumor; break;
            case PatchLabel::NegativeTumor: have = &have_neg_t; target = config.target_negative_tumor; break;
            case PatchLabel::NegativeNormal: have = &have_neg_n; target = config.target_negative_normal; break;
        }
        if (*have >= target) continue;
        ++*have;
        Patch patch;
        patch.slide_id = slide.id;
        patch.x = x;
        patch.y = y;
        patch.size_px = size;
        patch.pixels = read_region(slide, x, y, size, size);
        patch.label = *label;
        out.push_back(std::move(patch));
    }

    const auto check = [&](long have, long target, const char* name) {
        if (target > 0 && have * 2 < target)
            throw_data("extract_patches: class " + std::string(name) + " under-filled on slide " +
                       slide.id + ": " + std::to_string(have) + "/" + std::to_string(target));
    };
    check(have_pos, config.target_positive_tumor, "positive_tumor");
    check(have_neg_t, config.target_negative_tumor, "negative_tumor");
    check(have_neg_n, config.target_negative_normal, "negative_normal");
    return out;
}

FoldAssignment assign_folds(const DatasetManifest& manifest, int k, std::uint64_t seed) {
    if (k < 2) throw_data("assign_folds: need at least 2 folds");
    if (static_cast<std::size_t>(k) > manifest.entries.size())
        throw_data("assign_folds: more folds than slides");

    std::vector<std::string> tumor_ids, normal_ids;
    for (const auto& entry : manifest.entries) {
        const std::string id = fs::path(entry.slide_path).stem().string();
        (entry.label == SlideLabel::Tumor ? tumor_ids : normal_ids).push_back(id);
    }

    Rng rng(seed);
    const auto shuffle = [&rng](std::vector<std::string>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[rng.uniform_int(0, static_cast<std::uint64_t>(i - 1))]);
    };
    shuffle(tumor_ids);
    shuffle(normal_ids);

    FoldAssignment folds;
    folds.k = k;
    // Round-robin each stratum; normals continue where tumors stopped so the
    // per-fold totals stay within one of each other.
    for (std::size_t i = 0; i < tumor_ids.size(); ++i)
        folds.fold_of[tumor_ids[i]] = static_cast<int>(i % k);
    const std::size_t offset = tumor_ids.size() % k;
    for (std::size_t i = 0; i < normal_ids.size(); ++i)
        folds.fold_of[normal_ids[i]] = static_cast<int>((offset + i) % k);
    return folds;
}

void write_patch_set(const std::vector<Patch>& patches, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw_io("cannot create patch directory: " + dir.string());

    nlohmann::json records = nlohmann::json::array();
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const Patch& patch = patches[i];
        char name[32];
        std::snprintf(name, sizeof(name), "patch_%06zu.png", i);
        write_png(dir / name, patch.pixels);
        records.push_back({{"slide_id", patch.slide_id},
                           {"x", patch.x},
                           {"y", patch.y},
                           {"size", patch.size_px},
                           {"label", to_string(patch.label)},
                           {"file", name}});
    }
    std::ofstream out(dir / "patches.json");
    if (!out) throw_io("cannot write patch index: " + (dir / "patches.json").string());
    out << records.dump(2) << "\n";
}

std::vector<Patch> read_patch_set(const fs::path& dir) {
    std::ifstream in(dir / "patches.json");
    if (!in) throw_io("cannot open patch index: " + (dir / "patches.json").string());
    nlohmann::json records;
    try {
        in >> records;
    } catch (const nlohmann::json::exception& e) {
        throw_data("invalid patch index JSON: " + std::string(e.what()));
    }

    std::vector<Patch> patches;
    patches.reserve(records.size());
    try {
        for (const auto& r : records) {
            Patch patch;
            patch.slide_id = r.at("slide_id").get<std::string>();
            patch.x = r.at("x").get<int>();
            patch.y = r.at("y").get<int>();
            patch.size_px = r.at("size").get<int>();
            patch.label = patch_label_from_string(r.at("label").get<std::string>());
            patch.pixels = read_png(dir / r.at("file").get<std::string>());
            if (patch.pixels.channels != 3 || patch.pixels.width != patch.size_px ||
                patch.pixels.height != patch.size_px)
                throw_data("patch image does not match its record: " + r.at("file").get<std::string>());
            patches.push_back(std::move(patch));
        }
    } catch (const nlohmann::json::exception&) {
        throw_data("patch index missing required fields");
    }
    return patches;
}

void write_fold_assignment(const FoldAssignment& folds, const fs::path& path) {
    nlohmann::json j{{"k", folds.k}, {"folds", nlohmann::json::object()}};
    for (const auto& [id, fold] : folds.fold_of) j["folds"][id] = fold;
    std::ofstream out(path);
    if (!out) throw_io("cannot write fold assignment: " + path.string());
    out << j.dump(2) << "\n";
}

FoldAssignment read_fold_assignment(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open fold assignment: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw_data("invalid fold assignment JSON: " + std::string(e.what()));
    }
    FoldAssignment folds;
    try {
        folds.k = j.at("k").get<int>();
        for (const auto& [id, fold] : j.at("folds").items()) {
            const int f = fold.get<int>();
            if (f < 0 || f >= folds.k) throw_data("fold index out of range for slide " + id);
            folds.fold_of[id] = f;
        }
    } catch (const nlohmann::json::exception&) {
        throw_data("fold assignment missing required fields: " + path.string());
    }
    return folds;
}

}  // namespace ptri
