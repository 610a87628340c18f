#include "ptri/augment.hpp"

#include <algorithm>
#include <cmath>

#include "ptri/error.hpp"

namespace ptri {

AugmentDraw sample_draw(const AugmentConfig& config, Rng& rng) {
    if (config.max_rotation_deg < 0) throw_data("augment: negative rotation bound");
    if (config.max_zoom_fraction < 0 || config.max_zoom_fraction >= 1)
        throw_data("augment: zoom fraction must be in [0, 1)");

    AugmentDraw draw;
    draw.theta_deg = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg);
    draw.zoom = rng.uniform(1.0 - config.max_zoom_fraction, 1.0 + config.max_zoom_fraction);
    const bool h = rng.bernoulli(), v = rng.bernoulli();
    draw.flip_h = h && config.horizontal_flip;
    draw.flip_v = v && config.vertical_flip;
    return draw;
}

ImageU8 flip_h(const ImageU8& img) {
    ImageU8 out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
    return out;
}

ImageU8 flip_v(const ImageU8& img) {
    ImageU8 out(img.width, img.height, img.channels);
    const std::size_t row_bytes = static_cast<std::size_t>(img.width) * img.channels;
    for (int y = 0; y < img.height; ++y)
        std::copy_n(&img.data[static_cast<std::size_t>(img.height - 1 - y) * row_bytes], row_bytes,
                    &out.data[static_cast<std::size_t>(y) * row_bytes]);
    return out;
}

namespace {

std::uint8_t sample_bilinear(const ImageU8& img, double sx, double sy, int c) {
    sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
    sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = sx - x0, fy = sy - y0;
    const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
    const double bot = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
    const double v = (1.0 - fy) * top + fy * bot;
    return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
}

// Shared inverse-mapping resampler: dst pixel p maps to source c + M(p - c).
ImageU8 warp(const ImageU8& img, double m00, double m01, double m10, double m11) {
    ImageU8 out(img.width, img.height, img.channels);
    const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double sx = cx + m00 * dx + m01 * dy;
            const double sy = cy + m10 * dx + m11 * dy;
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = sample_bilinear(img, sx, sy, c);
        }
    return out;
}

}  // namespace

ImageU8 rotate(const ImageU8& img, double theta_deg) {
    if (theta_deg == 0.0) return img;
    const double theta = theta_deg * (M_PI / 180.0);
    // Inverse of a CCW rotation by theta.
    const double c = std::cos(theta), s = std::sin(theta);
    return warp(img, c, s, -s, c);
}

ImageU8 zoom(const ImageU8& img, double factor) {
    if (factor <= 0) throw_data("zoom: factor must be positive");
    if (factor == 1.0) return img;
    const double inv = 1.0 / factor;
    return warp(img, inv, 0.0, 0.0, inv);
}

ImageU8 augment(const ImageU8& patch, const AugmentDraw& draw) {
    if (patch.width != patch.height) throw_data("augment: patch must be square");
    if (patch.channels != 3) throw_data("augment: patch must be RGB");

    ImageU8 out = patch;
    if (draw.flip_h) out = flip_h(out);
    if (draw.flip_v) out = flip_v(out);
    out = rotate(out, draw.theta_deg);
    out = zoom(out, draw.zoom);
    return out;
}

}  // namespace ptri
