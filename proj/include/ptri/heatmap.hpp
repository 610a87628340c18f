#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ptri/graph.hpp"
#include "ptri/image.hpp"
#include "ptri/preprocess.hpp"
#include "ptri/slide.hpp"

namespace ptri {

struct Heatmap {
    std::string slide_id;
    int grid_w = 0, grid_h = 0;
    int stride_px = 0, patch_size_px = 0;
    double decision_threshold = 0.9;
    std::vector<double> probs;             // row-major grid, values in [0,1]
    std::vector<std::uint8_t> evaluated;   // 1 where the model actually ran

    double prob(int row, int col) const {
        return probs[static_cast<std::size_t>(row) * grid_w + col];
    }
};

struct HeatmapConfig {
    int stride_px = 0;  // 0 means one patch per cell (stride = patch size)
    double decision_threshold = 0.9;
    bool skip_non_tissue = true;
    double min_tissue_fraction = 0.5;
    std::optional<ColorTemplate> color_template;
    int batch_size = 32;
};

struct ComparisonReport {
    double dice = 0.0;
    double iou = 0.0;
    double cell_sensitivity = 0.0;
    double cell_specificity = 0.0;
};

// Slides the model over the slide on a regular grid. Cells under the tissue
// threshold (when skipping) score 0 without running the model. When a color
// template is given the slide is standardized over tissue before cropping.
Heatmap predict_heatmap(const Slide& slide, const ModelGraph& model, const BinaryMask& tissue,
                        const HeatmapConfig& config);

BinaryMask threshold_heatmap(const Heatmap& h, double tau);

// Downsamples the pixel mask to the heatmap grid with the same central-window
// rule used for patch labeling, then scores the thresholded heatmap cells.
ComparisonReport compare_to_ground_truth(const Heatmap& h, const AnnotationMask& truth, double tau);

// Grayscale probability PNG plus a JSON geometry sidecar next to it.
void render_heatmap(const Heatmap& h, const std::filesystem::path& png_path);

// Slide-sized composite: red tint on flagged patches, green truth contours.
void render_overlay(const ImageU8& slide_image, const Heatmap& h, const BinaryMask* truth,
                    const std::filesystem::path& png_path);

}  // namespace ptri
