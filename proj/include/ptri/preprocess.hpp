#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ptri/image.hpp"

namespace ptri {

struct Slide;

// Planar HSV image: h in degrees [0,360), s and v in [0,1].
// h is 0 wherever s is 0.
struct HsvImage {
    int width = 0;
    int height = 0;
    std::vector<float> h, s, v;

    HsvImage() = default;
    HsvImage(int w, int h_)
        : width(w), height(h_),
          h(static_cast<std::size_t>(w) * h_), s(h.size()), v(h.size()) {}

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

// Per-channel HSV moments over tissue pixels. Hue statistics are circular
// (resultant-vector mean, sqrt(-2 ln R) dispersion), in degrees.
struct ColorTemplate {
    double mean_h = 0, mean_s = 0, mean_v = 0;
    double std_h = 0, std_s = 0, std_v = 0;
};

// Lower std bounds: 1e-3 on the unit-range channels, the same bound scaled
// to degrees for hue.
inline constexpr double kStdFloorSv = 1e-3;
inline constexpr double kStdFloorHueDeg = 1e-3 * 360.0;

// Value-channel guard band for tissue detection; pixels outside it are
// never tissue (black artifacts, specular glare).
inline constexpr double kTissueValueLo = 0.1;
inline constexpr double kTissueValueHi = 0.98;

/// Exact hexcone RGB -> HSV, per pixel.
HsvImage rgb_to_hsv(const ImageU8& rgb);

/// Inverse of rgb_to_hsv, rounding back to 8-bit channels.
ImageU8 hsv_to_rgb(const HsvImage& hsv);

std::array<std::uint8_t, 3> rgb_to_hsv_pixel_inverse(float h, float s, float v);

/// Threshold maximizing between-class variance w0*w1*(mu0-mu1)^2, where class 0
/// is bins <= t. Ties resolve to the smallest t. Throws when all mass sits in
/// a single bin ("no threshold exists").
int otsu_threshold(const std::array<std::uint64_t, 256>& histogram);

/// Erosion / dilation with a (2r+1)x(2r+1) square structuring element.
/// Out-of-bounds pixels count as background for both operators, so erosion
/// strips foreground that lacks a full in-bounds neighborhood.
BinaryMask erode(const BinaryMask& mask, int se_radius);
BinaryMask dilate(const BinaryMask& mask, int se_radius);

/// Opening (erode then dilate) and closing (dilate then erode).
BinaryMask morph_open(const BinaryMask& mask, int se_radius);
BinaryMask morph_close(const BinaryMask& mask, int se_radius);

/// Tissue segmentation: Otsu on the saturation channel (scaled to 0..255)
/// gated by v in [kTissueValueLo, kTissueValueHi], then opening and closing
/// with radius 1. Propagates the degenerate-histogram error for uniform
/// slides.
BinaryMask tissue_mask(const Slide& slide);
BinaryMask tissue_mask(const ImageU8& rgb);

/// HSV moments over masked pixels (population std, circular hue statistics).
/// Requires at least 2 masked pixels. Stds are clamped to the floors above.
ColorTemplate compute_color_stats(const ImageU8& rgb, const BinaryMask& mask);
ColorTemplate compute_color_stats(const HsvImage& hsv, const BinaryMask& mask);

/// Moment-match masked pixels to the template, per HSV channel; hue moves
/// circularly about the template mean. Unmasked pixels pass through
/// bit-identically.
ImageU8 standardize_color(const ImageU8& rgb, const BinaryMask& mask, const ColorTemplate& tpl);

ColorTemplate read_color_template(const std::filesystem::path& path);
void write_color_template(const ColorTemplate& tpl, const std::filesystem::path& path);

}  // namespace ptri
