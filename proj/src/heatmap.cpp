#include "ptri/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ptri/png_io.hpp"
#include "ptri/train.hpp"

namespace fs = std::filesystem;

namespace ptri {

Heatmap predict_heatmap(const Slide& slide, const ModelGraph& model, const BinaryMask& tissue,
                        const HeatmapConfig& config) {
    const int patch = model.input_size;
    if (patch > slide.width_px || patch > slide.height_px)
        throw_data("heatmap: patch size exceeds slide dimensions");
    if (tissue.width != slide.width_px || tissue.height != slide.height_px)
        throw_data("heatmap: tissue mask does not match slide dimensions");
    const int stride = config.stride_px > 0 ? config.stride_px : patch;
    if (stride < 1 || stride > patch * 4) throw_data("heatmap: stride out of range");
    if (!(config.decision_threshold > 0.0 && config.decision_threshold < 1.0))
        throw_data("heatmap: decision threshold must be in (0, 1)");

    Heatmap h;
    h.slide_id = slide.id;
    h.patch_size_px = patch;
    h.stride_px = stride;
    h.decision_threshold = config.decision_threshold;
    h.grid_w = (slide.width_px - patch) / stride + 1;
    h.grid_h = (slide.height_px - patch) / stride + 1;
    const std::size_t cells = static_cast<std::size_t>(h.grid_w) * h.grid_h;
    h.probs.assign(cells, 0.0);
    h.evaluated.assign(cells, 0);

    ImageU8 image = slide.to_image();
    if (config.color_template) image = standardize_color(image, tissue, *config.color_template);

    std::vector<std::size_t> pending;
    pending.reserve(cells);
    const double patch_area = static_cast<double>(patch) * patch;
    for (int row = 0; row < h.grid_h; ++row)
        for (int col = 0; col < h.grid_w; ++col) {
            const int x = col * stride, y = row * stride;
            if (config.skip_non_tissue) {
                std::size_t tissue_px = 0;
                for (int yy = y; yy < y + patch; ++yy)
                    for (int xx = x; xx < x + patch; ++xx) tissue_px += tissue.at(xx, yy);
                if (static_cast<double>(tissue_px) / patch_area < config.min_tissue_fraction) continue;
            }
            pending.push_back(static_cast<std::size_t>(row) * h.grid_w + col);
        }

    const int batch = std::max(1, config.batch_size);
    std::vector<ImageU8> crops;
    std::vector<const ImageU8*> imgs;
    for (std::size_t start = 0; start < pending.size(); start += static_cast<std::size_t>(batch)) {
        const std::size_t end = std::min(pending.size(), start + static_cast<std::size_t>(batch));
        crops.clear();
        imgs.clear();
        for (std::size_t i = start; i < end; ++i) {
            const int col = static_cast<int>(pending[i] % static_cast<std::size_t>(h.grid_w));
            const int row = static_cast<int>(pending[i] / static_cast<std::size_t>(h.grid_w));
            crops.push_back(crop(image, col * stride, row * stride, patch, patch));
        }
        for (const ImageU8& c : crops) imgs.push_back(&c);
        const Tensor<float> probs = softmax_forward(model.forward(image_batch_to_tensor(imgs)));
        for (std::size_t i = start; i < end; ++i) {
            h.probs[pending[i]] = static_cast<double>(probs.ptr()[(i - start) * 2 + 1]);
            h.evaluated[pending[i]] = 1;
        }
    }
    return h;
}

BinaryMask threshold_heatmap(const Heatmap& h, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw_data("threshold_heatmap: tau must be in (0, 1)");
    BinaryMask mask(h.grid_w, h.grid_h);
    for (std::size_t i = 0; i < h.probs.size(); ++i) mask.pixels[i] = h.probs[i] >= tau ? 1 : 0;
    return mask;
}

namespace {

// Truth at grid resolution: a cell is tumor when the central half-window of
// its patch footprint touches the pixel mask, mirroring patch labeling.
BinaryMask downsample_truth(const Heatmap& h, const BinaryMask& pixel_mask) {
    const int patch = h.patch_size_px, stride = h.stride_px;
    if ((pixel_mask.width - patch) / stride + 1 != h.grid_w ||
        (pixel_mask.height - patch) / stride + 1 != h.grid_h)
        throw_data("heatmap comparison: mask dimensions do not match heatmap geometry");

    BinaryMask grid(h.grid_w, h.grid_h);
    const int half = patch / 2, quarter = patch / 4;
    for (int row = 0; row < h.grid_h; ++row)
        for (int col = 0; col < h.grid_w; ++col) {
            const int x0 = col * stride + quarter, y0 = row * stride + quarter;
            std::uint8_t hit = 0;
            for (int y = y0; y < y0 + half && !hit; ++y)
                for (int x = x0; x < x0 + half; ++x)
                    if (pixel_mask.at(x, y)) {
                        hit = 1;
                        break;
                    }
            grid.at(col, row) = hit;
        }
    return grid;
}

}  // namespace

ComparisonReport compare_to_ground_truth(const Heatmap& h, const AnnotationMask& truth, double tau) {
    const BinaryMask pred = threshold_heatmap(h, tau);
    const BinaryMask grid_truth = downsample_truth(h, truth.mask);

    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
        const bool p = pred.pixels[i], t = grid_truth.pixels[i];
        if (p && t)
            ++tp;
        else if (p && !t)
            ++fp;
        else if (!p && t)
            ++fn;
        else
            ++tn;
    }
    const auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    ComparisonReport r;
    r.dice = ratio(2 * tp, 2 * tp + fp + fn);
    r.iou = ratio(tp, tp + fp + fn);
    r.cell_sensitivity = ratio(tp, tp + fn);
    r.cell_specificity = ratio(tn, tn + fp);
    return r;
}

void render_heatmap(const Heatmap& h, const fs::path& png_path) {
    ImageU8 img(h.grid_w, h.grid_h, 1);
    for (std::size_t i = 0; i < h.probs.size(); ++i)
        img.data[i] = static_cast<std::uint8_t>(std::lround(h.probs[i] * 255.0));
    write_png(png_path, img);

    const nlohmann::json sidecar{{"slide_id", h.slide_id},
                                 {"grid_w", h.grid_w},
                                 {"grid_h", h.grid_h},
                                 {"stride_px", h.stride_px},
                                 {"patch_size_px", h.patch_size_px},
                                 {"threshold", h.decision_threshold}};
    fs::path json_path = png_path;
    json_path.replace_extension(".json");
    std::ofstream out(json_path);
    if (!out) throw_io("cannot write heatmap sidecar: " + json_path.string());
    out << sidecar.dump(2) << "\n";
}

void render_overlay(const ImageU8& slide_image, const Heatmap& h, const BinaryMask* truth,
                    const fs::path& png_path) {
    if (slide_image.channels != 3) throw_data("overlay: slide image must be RGB");
    ImageU8 out = slide_image;

    BinaryMask flagged(slide_image.width, slide_image.height);
    for (int row = 0; row < h.grid_h; ++row)
        for (int col = 0; col < h.grid_w; ++col) {
            if (h.prob(row, col) < h.decision_threshold) continue;
            const int x0 = col * h.stride_px, y0 = row * h.stride_px;
            const int x1 = std::min(x0 + h.patch_size_px, slide_image.width);
            const int y1 = std::min(y0 + h.patch_size_px, slide_image.height);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) flagged.at(x, y) = 1;
        }
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            if (!flagged.at(x, y)) continue;
            out.at(x, y, 0) = static_cast<std::uint8_t>((out.at(x, y, 0) + 255) / 2);
            out.at(x, y, 1) = static_cast<std::uint8_t>(out.at(x, y, 1) / 2);
            out.at(x, y, 2) = static_cast<std::uint8_t>(out.at(x, y, 2) / 2);
        }

    if (truth) {
        if (truth->width != slide_image.width || truth->height != slide_image.height)
            throw_data("overlay: truth mask does not match slide dimensions");
        for (int y = 0; y < truth->height; ++y)
            for (int x = 0; x < truth->width; ++x) {
                if (!truth->at(x, y)) continue;
                const bool boundary = (x == 0 || !truth->at(x - 1, y)) ||
                                      (x == truth->width - 1 || !truth->at(x + 1, y)) ||
                                      (y == 0 || !truth->at(x, y - 1)) ||
                                      (y == truth->height - 1 || !truth->at(x, y + 1));
                if (!boundary) continue;
                out.at(x, y, 0) = 0;
                out.at(x, y, 1) = 255;
                out.at(x, y, 2) = 0;
            }
    }
    write_png(png_path, out);
}

}  // namespace ptri
