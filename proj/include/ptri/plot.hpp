#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ptri/image.hpp"
#include "ptri/metrics.hpp"

namespace ptri {

// Minimal raster plotting (no external plotting dependency): enough for a
// ROC curve and a labeled bar chart.

void draw_text(ImageU8& img, int x, int y, const std::string& text, std::uint8_t r, std::uint8_t g,
               std::uint8_t b, int scale = 1);

void render_roc_png(const RocCurve& curve, const std::filesystem::path& path);

void render_bar_chart_png(const std::vector<std::string>& labels,
                          const std::vector<double>& values, const std::string& title,
                          const std::filesystem::path& path);

}  // namespace ptri
