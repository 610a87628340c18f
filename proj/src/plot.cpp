#include "ptri/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include "ptri/error.hpp"
#include "ptri/png_io.hpp"

namespace ptri {

namespace {

// 5x7 glyphs, one byte per row, low 5 bits used.
const std::map<char, std::array<std::uint8_t, 7>>& font() {
    static const std::map<char, std::array<std::uint8_t, 7>> glyphs = {
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
        {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
        {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
        {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
        {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
        {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
        {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
        {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
        {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
        {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
        {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
        {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
        {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
        {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
        {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
        {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
        {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
        {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
        {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
        {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
        {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}},
        {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
        {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
        {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
        {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
        {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
        {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
        {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    };
    return glyphs;
}

void put_pixel(ImageU8& img, int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    img.at(x, y, 0) = r;
    img.at(x, y, 1) = g;
    img.at(x, y, 2) = b;
}

void draw_line(ImageU8& img, int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g,
               std::uint8_t b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        put_pixel(img, x0, y0, r, g, b);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void fill_rect(ImageU8& img, int x0, int y0, int w, int h, std::uint8_t r, std::uint8_t g,
               std::uint8_t b) {
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) put_pixel(img, x, y, r, g, b);
}

}  // namespace

void draw_text(ImageU8& img, int x, int y, const std::string& text, std::uint8_t r, std::uint8_t g,
               std::uint8_t b, int scale) {
    int cx = x;
    for (char raw : text) {
        const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
        const auto it = font().find(c);
        if (it != font().end()) {
            for (int row = 0; row < 7; ++row)
                for (int col = 0; col < 5; ++col)
                    if (it->second[static_cast<std::size_t>(row)] & (1 << (4 - col)))
                        for (int sy = 0; sy < scale; ++sy)
                            for (int sx = 0; sx < scale; ++sx)
                                put_pixel(img, cx + col * scale + sx, y + row * scale + sy, r, g, b);
        }
        cx += 6 * scale;
    }
}

void render_roc_png(const RocCurve& curve, const std::filesystem::path& path) {
    if (curve.fpr.empty()) throw_data("roc plot: empty curve");
    constexpr int size = 512, margin = 48;
    constexpr int plot = size - 2 * margin;
    ImageU8 img(size, size, 3);
    std::fill(img.data.begin(), img.data.end(), std::uint8_t{255});

    const auto px = [&](double fpr) { return margin + static_cast<int>(std::lround(fpr * plot)); };
    const auto py = [&](double tpr) {
        return size - margin - static_cast<int>(std::lround(tpr * plot));
    };

    for (int i = 0; i <= 10; ++i) {
        const int gx = margin + i * plot / 10;
        const int gy = size - margin - i * plot / 10;
        draw_line(img, gx, margin, gx, size - margin, 230, 230, 230);
        draw_line(img, margin, gy, size - margin, gy, 230, 230, 230);
    }
    draw_line(img, px(0), py(0), px(1), py(1), 190, 190, 190);  // chance diagonal
    draw_line(img, margin, margin, margin, size - margin, 0, 0, 0);
    draw_line(img, margin, size - margin, size - margin, size - margin, 0, 0, 0);

    for (std::size_t i = 1; i < curve.fpr.size(); ++i) {
        // Step: horizontal to the new FPR, then vertical to the new TPR.
        draw_line(img, px(curve.fpr[i - 1]), py(curve.tpr[i - 1]), px(curve.fpr[i]),
                  py(curve.tpr[i - 1]), 200, 30, 30);
        draw_line(img, px(curve.fpr[i]), py(curve.tpr[i - 1]), px(curve.fpr[i]), py(curve.tpr[i]),
                  200, 30, 30);
    }

    char label[96];
    std::snprintf(label, sizeof(label), "AUC = %.3f (%.3f-%.3f)", curve.auc, curve.ci_low,
                  curve.ci_high);
    draw_text(img, margin + 10, margin + 10, label, 0, 0, 0);
    draw_text(img, size / 2 - 30, size - margin + 14, "FPR", 0, 0, 0);
    draw_text(img, 8, size / 2, "TPR", 0, 0, 0);
    write_png(path, img);
}

void render_bar_chart_png(const std::vector<std::string>& labels,
                          const std::vector<double>& values, const std::string& title,
                          const std::filesystem::path& path) {
    if (labels.empty() || labels.size() != values.size()) throw_data("bar chart: bad inputs");
    constexpr int size = 512, margin = 56;
    ImageU8 img(size, size, 3);
    std::fill(img.data.begin(), img.data.end(), std::uint8_t{255});

    const double vmax = *std::max_element(values.begin(), values.end());
    const int plot_h = size - 2 * margin;
    const int n = static_cast<int>(labels.size());
    const int slot = (size - 2 * margin) / n;
    const int bar_w = std::max(8, slot * 2 / 3);

    draw_line(img, margin, margin, margin, size - margin, 0, 0, 0);
    draw_line(img, margin, size - margin, size - margin, size - margin, 0, 0, 0);
    draw_text(img, margin, margin - 20, title, 0, 0, 0);

    for (int i = 0; i < n; ++i) {
        const double v = values[static_cast<std::size_t>(i)];
        const int h = vmax > 0 ? static_cast<int>(std::lround(v / vmax * plot_h)) : 0;
        const int x0 = margin + i * slot + (slot - bar_w) / 2;
        const int y0 = size - margin - h;
        fill_rect(img, x0, y0, bar_w, h, 70, 110, 200);
        char val[32];
        std::snprintf(val, sizeof(val), "%.1f", v);
        draw_text(img, x0, y0 - 12, val, 0, 0, 0);
        draw_text(img, x0, size - margin + 8, labels[static_cast<std::size_t>(i)], 0, 0, 0);
    }
    write_png(path, img);
}

}  // namespace ptri
