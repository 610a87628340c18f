#include "ptri/slide.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "ptri/png_io.hpp"
#include "ptri/rng.hpp"

namespace fs = std::filesystem;

namespace ptri {

const char* to_string(SlideLabel label) { return label == SlideLabel::Tumor ? "tumor" : "normal"; }

SlideLabel slide_label_from_string(const std::string& s) {
    if (s == "tumor") return SlideLabel::Tumor;
    if (s == "normal") return SlideLabel::Normal;
    throw_data("unknown slide label: " + s);
}

ImageU8 Slide::to_image() const { return read_region(*this, 0, 0, width_px, height_px); }

Slide make_slide(std::string id, const ImageU8& image, int tile_size, SlideLabel label) {
    if (image.channels != 3) throw_data("make_slide: slides are RGB");
    if (tile_size <= 0) throw_data("make_slide: tile_size must be positive");
    if (image.width <= 0 || image.height <= 0) throw_data("make_slide: empty image");

    Slide slide;
    slide.id = std::move(id);
    slide.width_px = image.width;
    slide.height_px = image.height;
    slide.tile_size = tile_size;
    slide.label = label;

    const int tx = slide.tiles_x(), ty = slide.tiles_y();
    slide.tiles.reserve(static_cast<std::size_t>(tx) * ty);
    for (int row = 0; row < ty; ++row)
        for (int col = 0; col < tx; ++col) {
            const int x0 = col * tile_size, y0 = row * tile_size;
            const int w = std::min(tile_size, image.width - x0);
            const int h = std::min(tile_size, image.height - y0);
            slide.tiles.push_back(crop(image, x0, y0, w, h));
        }
    return slide;
}

ImageU8 read_region(const Slide& slide, int x, int y, int w, int h) {
    if (w <= 0 || h <= 0 || x < 0 || y < 0 || x + w > slide.width_px || y + h > slide.height_px)
        throw_data("read_region: region out of bounds");

    ImageU8 out(w, h, 3);
    const int ts = slide.tile_size;
    const int row0 = y / ts, row1 = (y + h - 1) / ts;
    const int col0 = x / ts, col1 = (x + w - 1) / ts;
    for (int row = row0; row <= row1; ++row) {
        for (int col = col0; col <= col1; ++col) {
            const ImageU8& tile = slide.tile(row, col);
            const int tx0 = col * ts, ty0 = row * ts;
            const int ix0 = std::max(x, tx0), iy0 = std::max(y, ty0);
            const int ix1 = std::min(x + w, tx0 + tile.width), iy1 = std::min(y + h, ty0 + tile.height);
            const std::size_t span = static_cast<std::size_t>(ix1 - ix0) * 3;
            for (int yy = iy0; yy < iy1; ++yy) {
                const std::uint8_t* src =
                    &tile.data[((static_cast<std::size_t>(yy - ty0)) * tile.width + (ix0 - tx0)) * 3];
                std::uint8_t* dst = &out.data[((static_cast<std::size_t>(yy - y)) * w + (ix0 - x)) * 3];
                std::copy(src, src + span, dst);
            }
        }
    }
    return out;
}

void write_slide(const Slide& slide, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw_io("cannot create slide directory: " + dir.string());

    nlohmann::json meta{{"id", slide.id},
                        {"width_px", slide.width_px},
                        {"height_px", slide.height_px},
                        {"tile_size", slide.tile_size},
                        {"label", to_string(slide.label)}};
    std::ofstream out(dir / "meta.json");
    if (!out) throw_io("cannot write slide metadata: " + (dir / "meta.json").string());
    out << meta.dump(2) << "\n";
    out.close();

    const int tx = slide.tiles_x(), ty = slide.tiles_y();
    for (int row = 0; row < ty; ++row)
        for (int col = 0; col < tx; ++col) {
            const std::string name = "tile_" + std::to_string(row) + "_" + std::to_string(col) + ".png";
            write_png(dir / name, slide.tile(row, col));
        }
}

Slide read_slide(const fs::path& path) {
    if (fs::is_regular_file(path)) {
        ImageU8 img = read_png(path);
        if (img.channels != 3) throw_data("flat slide image is not RGB: " + path.string());
        return make_slide(path.stem().string(), img, std::max(img.width, img.height), SlideLabel::Normal);
    }

    const fs::path meta_path = path / "meta.json";
    if (!fs::exists(meta_path)) throw_io("missing slide metadata file: " + meta_path.string());
    std::ifstream in(meta_path);
    if (!in) throw_io("cannot open slide metadata: " + meta_path.string());
    nlohmann::json meta;
    try {
        in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw_data("invalid slide metadata: " + std::string(e.what()));
    }

    Slide slide;
    try {
        slide.id = meta.at("id").get<std::string>();
        slide.width_px = meta.at("width_px").get<int>();
        slide.height_px = meta.at("height_px").get<int>();
        slide.tile_size = meta.at("tile_size").get<int>();
        slide.label = slide_label_from_string(meta.at("label").get<std::string>());
    } catch (const nlohmann::json::exception&) {
        throw_data("slide metadata missing required keys: " + meta_path.string());
    }
    if (slide.width_px <= 0 || slide.height_px <= 0 || slide.tile_size <= 0)
        throw_data("slide metadata has non-positive dimensions: " + meta_path.string());

    const int tx = slide.tiles_x(), ty = slide.tiles_y();
    slide.tiles.reserve(static_cast<std::size_t>(tx) * ty);
    for (int row = 0; row < ty; ++row)
        for (int col = 0; col < tx; ++col) {
            const std::string name = "tile_" + std::to_string(row) + "_" + std::to_string(col) + ".png";
            const fs::path tile_path = path / name;
            if (!fs::exists(tile_path)) throw_io("missing tile: " + tile_path.string());
            ImageU8 tile = read_png(tile_path);
            if (tile.channels != 3) throw_data("tile is not RGB: " + tile_path.string());
            const int want_w = std::min(slide.tile_size, slide.width_px - col * slide.tile_size);
            const int want_h = std::min(slide.tile_size, slide.height_px - row * slide.tile_size);
            if (tile.width != want_w || tile.height != want_h)
                throw_data("tile dimension mismatch: " + tile_path.string());
            slide.tiles.push_back(std::move(tile));
        }
    return slide;
}

namespace {

struct Nodule {
    int cx, cy, r;
};

constexpr int kNoduleAttempts = 1000;

// Smooth scalar field from a handful of low-frequency cosine waves; blobs
// come from thresholding it at the tissue_fraction quantile.
struct BlobField {
    static constexpr int kWaves = 6;
    double amp[kWaves], fx[kWaves], fy[kWaves], phase[kWaves];

    explicit BlobField(Rng& rng) {
        constexpr double kTau = 6.283185307179586;
        for (int i = 0; i < kWaves; ++i) {
            const double freq = rng.uniform(0.5, 2.5);
            const double dir = rng.uniform(0.0, kTau);
            amp[i] = rng.uniform(0.5, 1.0);
            fx[i] = freq * std::cos(dir);
            fy[i] = freq * std::sin(dir);
            phase[i] = rng.uniform(0.0, kTau);
        }
    }

    double operator()(double u, double v) const {
        constexpr double kTau = 6.283185307179586;
        double f = 0;
        for (int i = 0; i < kWaves; ++i) f += amp[i] * std::cos(kTau * (fx[i] * u + fy[i] * v) + phase[i]);
        return f;
    }
};

}  // namespace

SyntheticSlide generate_synthetic_slide(const SyntheticSlideSpec& spec) {
    if (spec.width_px <= 0 || spec.height_px <= 0 || spec.tile_size <= 0)
        throw_data("synthetic slide: dimensions must be positive");
    if (!(spec.tissue_fraction > 0.0 && spec.tissue_fraction <= 1.0))
        throw_data("synthetic slide: tissue_fraction must be in (0, 1]");
    if (spec.tumor_nodule_count < 0) throw_data("synthetic slide: negative nodule count");
    if (spec.tumor_nodule_radius_min < 1 || spec.tumor_nodule_radius_max < spec.tumor_nodule_radius_min)
        throw_data("synthetic slide: invalid nodule radius range");

    const int w = spec.width_px, h = spec.height_px;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    Rng rng(spec.seed);

    // Tissue footprint: threshold the blob field at the requested quantile.
    BlobField field(rng);
    std::vector<float> values(n);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            values[static_cast<std::size_t>(y) * w + x] =
                static_cast<float>(field(static_cast<double>(x) / w, static_cast<double>(y) / h));

    BinaryMask tissue(w, h, 0);
    {
        std::vector<float> sorted(values);
        std::size_t cut = static_cast<std::size_t>(std::floor((1.0 - spec.tissue_fraction) * static_cast<double>(n)));
        if (cut >= n) cut = n - 1;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(cut), sorted.end());
        const float tau = sorted[cut];
        for (std::size_t i = 0; i < n; ++i) tissue.pixels[i] = values[i] >= tau ? 1 : 0;
    }

    // Non-overlapping tumor disks fully inside tissue.
    std::vector<Nodule> nodules;
    BinaryMask tumor(w, h, 0);
    for (int k = 0; k < spec.tumor_nodule_count; ++k) {
        const int r = static_cast<int>(rng.uniform_int(spec.tumor_nodule_radius_min, spec.tumor_nodule_radius_max));
        bool placed = false;
        for (int attempt = 0; attempt < kNoduleAttempts && !placed; ++attempt) {
            const int cx = static_cast<int>(rng.uniform_int(0, w - 1));
            const int cy = static_cast<int>(rng.uniform_int(0, h - 1));
            if (cx - r < 0 || cx + r >= w || cy - r < 0 || cy + r >= h) continue;
            if (!tissue.at(cx, cy)) continue;
            bool ok = true;
            for (const auto& other : nodules) {
                const double dx = cx - other.cx, dy = cy - other.cy;
                if (std::sqrt(dx * dx + dy * dy) < static_cast<double>(r + other.r + 2)) {
                    ok = false;
                    break;
                }
            }
            for (int dy = -r; ok && dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (dx * dx + dy * dy > r * r) continue;
                    if (!tissue.at(cx + dx, cy + dy)) {
                        ok = false;
                        break;
                    }
                }
            if (!ok) continue;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx)
                    if (dx * dx + dy * dy <= r * r) tumor.at(cx + dx, cy + dy) = 1;
            nodules.push_back({cx, cy, r});
            placed = true;
        }
        if (!placed)
            throw_data("synthetic slide: nodule placement impossible (tissue too small after " +
                       std::to_string(kNoduleAttempts) + " attempts)");
    }

    // Paint regions with per-pixel uniform noise.
    ImageU8 img(w, h, 3);
    constexpr int base_bg[3] = {245, 245, 245};
    constexpr int base_tissue[3] = {230, 160, 200};
    constexpr int base_tumor[3] = {120, 60, 160};
    for (std::size_t i = 0; i < n; ++i) {
        const int* base;
        int amp;
        if (tumor.pixels[i]) {
            base = base_tumor;
            amp = 15;
        } else if (tissue.pixels[i]) {
            base = base_tissue;
            amp = 15;
        } else {
            base = base_bg;
            amp = 5;
        }
        for (int c = 0; c < 3; ++c) {
            const int v = base[c] + static_cast<int>(rng.uniform_int(-amp, amp));
            img.data[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
        }
    }

    // Soften region boundaries by one 3x3 mean pass restricted to pixels whose
    // neighborhood spans more than one region.
    {
        auto region_of = [&](std::size_t i) -> int { return tumor.pixels[i] ? 2 : (tissue.pixels[i] ? 1 : 0); };
        const ImageU8 painted = img;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                const int r0 = region_of(i);
                bool boundary = false;
                for (int dy = -1; !boundary && dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        if (region_of(static_cast<std::size_t>(ny) * w + nx) != r0) {
                            boundary = true;
                            break;
                        }
                    }
                if (!boundary) continue;
                for (int c = 0; c < 3; ++c) {
                    int sum = 0, cnt = 0;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int nx = x + dx, ny = y + dy;
                            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                            sum += painted.at(nx, ny, c);
                            ++cnt;
                        }
                    img.at(x, y, c) = static_cast<std::uint8_t>((sum + cnt / 2) / cnt);
                }
            }
    }

    SyntheticSlide out;
    const SlideLabel label = nodules.empty() ? SlideLabel::Normal : SlideLabel::Tumor;
    const std::string id = "synthetic_" + std::to_string(spec.seed);
    out.slide = make_slide(id, img, spec.tile_size, label);
    out.annotation = AnnotationMask{id, std::move(tumor)};
    out.tissue_footprint = std::move(tissue);
    return out;
}

BinaryMask read_mask_png(const fs::path& path) {
    ImageU8 img = read_png(path);
    if (img.channels != 1) throw_data("mask PNG must be grayscale: " + path.string());
    BinaryMask mask(img.width, img.height);
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) mask.pixels[i] = img.data[i] >= 128 ? 1 : 0;
    return mask;
}

void write_mask_png(const BinaryMask& mask, const fs::path& path) {
    ImageU8 img(mask.width, mask.height, 1);
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) img.data[i] = mask.pixels[i] ? 255 : 0;
    write_png(path, img);
}

namespace {

std::string entry_id(const std::string& slide_path) { return fs::path(slide_path).stem().string(); }

void validate_manifest(const DatasetManifest& manifest) {
    std::set<std::string> ids;
    for (const auto& entry : manifest.entries) {
        if (!ids.insert(entry_id(entry.slide_path)).second)
            throw_data("manifest: duplicate slide id " + entry_id(entry.slide_path));
        if (entry.label == SlideLabel::Tumor && !entry.mask_path)
            throw_data("manifest: tumor slide without mask: " + entry.slide_path);
    }
}

}  // namespace

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open manifest: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw_data("invalid manifest JSON: " + std::string(e.what()));
    }

    DatasetManifest manifest;
    try {
        manifest.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& e : j.at("entries")) {
            ManifestEntry entry;
            entry.slide_path = e.at("slide").get<std::string>();
            if (e.contains("mask") && !e.at("mask").is_null())
                entry.mask_path = e.at("mask").get<std::string>();
            entry.label = slide_label_from_string(e.at("label").get<std::string>());
            manifest.entries.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception&) {
        throw_data("manifest missing required fields: " + path.string());
    }
    validate_manifest(manifest);
    return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
    validate_manifest(manifest);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& entry : manifest.entries) {
        nlohmann::json e{{"slide", entry.slide_path}, {"label", to_string(entry.label)}};
        e["mask"] = entry.mask_path ? nlohmann::json(*entry.mask_path) : nlohmann::json(nullptr);
        entries.push_back(std::move(e));
    }
    nlohmann::json j{{"seed", manifest.seed}, {"entries", std::move(entries)}};
    std::ofstream out(path);
    if (!out) throw_io("cannot write manifest: " + path.string());
    out << j.dump(2) << "\n";
}

std::filesystem::path resolve_manifest_path(const fs::path& manifest_path, const std::string& entry_path) {
    fs::path p(entry_path);
    if (p.is_absolute()) return p;
    return manifest_path.parent_path() / p;
}

}  // namespace ptri
