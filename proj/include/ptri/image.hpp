#pragma once

#include <cstdint>
#include <vector>

#include "ptri/error.hpp"

namespace ptri {

// Interleaved 8-bit image, row-major. channels is 1 (gray) or 3 (RGB).
struct ImageU8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    ImageU8() = default;
    ImageU8(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::uint8_t& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool same_dims(const ImageU8& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

// Binary mask, pixels in {0,1}.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    BinaryMask() = default;
    BinaryMask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto p : pixels) n += p != 0;
        return n;
    }
};

struct Box {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive; empty when x1 < x0
    bool empty() const { return x1 < x0 || y1 < y0; }
};

/// Bounding box of foreground pixels.
inline Box mask_bbox(const BinaryMask& m) {
    Box b{m.width, m.height, -1, -1};
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y)) {
                if (x < b.x0) b.x0 = x;
                if (x > b.x1) b.x1 = x;
                if (y < b.y0) b.y0 = y;
                if (y > b.y1) b.y1 = y;
            }
    return b;
}

/// Crop a w×h region at (x, y); the region must lie inside the image.
inline ImageU8 crop(const ImageU8& img, int x, int y, int w, int h) {
    if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > img.width || y + h > img.height)
        throw_data("crop: region out of bounds");
    ImageU8 out(w, h, img.channels);
    const std::size_t row_bytes = static_cast<std::size_t>(w) * img.channels;
    for (int r = 0; r < h; ++r) {
        const std::uint8_t* src = &img.data[((static_cast<std::size_t>(y) + r) * img.width + x) * img.channels];
        std::uint8_t* dst = &out.data[static_cast<std::size_t>(r) * row_bytes];
        std::copy(src, src + row_bytes, dst);
    }
    return out;
}

}  // namespace ptri
