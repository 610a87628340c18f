#pragma once

#include <cstdint>

#include "ptri/image.hpp"
#include "ptri/rng.hpp"

namespace ptri {

struct AugmentConfig {
    double max_rotation_deg = 20.0;
    double max_zoom_fraction = 0.20;
    bool horizontal_flip = true;
    bool vertical_flip = true;
    std::uint64_t seed = 0;
};

struct AugmentDraw {
    double theta_deg = 0.0;
    double zoom = 1.0;
    bool flip_h = false;
    bool flip_v = false;
};

// Four values are always drawn in a fixed order so the random stream does not
// depend on which transforms are enabled.
AugmentDraw sample_draw(const AugmentConfig& config, Rng& rng);

ImageU8 flip_h(const ImageU8& img);
ImageU8 flip_v(const ImageU8& img);

// Bilinear resampling of the inverse mapping; out-of-range samples clamp to
// the nearest edge pixel. zoom > 1 magnifies about the image center.
ImageU8 rotate(const ImageU8& img, double theta_deg);
ImageU8 zoom(const ImageU8& img, double factor);

// Flips, then rotation, then zoom. Square RGB input required.
ImageU8 augment(const ImageU8& patch, const AugmentDraw& draw);

}  // namespace ptri
