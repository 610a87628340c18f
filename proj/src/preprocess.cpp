#include "ptri/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ptri/slide.hpp"

namespace ptri {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
constexpr double kRadToDeg = 180.0 / kPi;

inline double wrap_degrees(double h) {
    h = std::fmod(h, 360.0);
    return h < 0 ? h + 360.0 : h;
}

// Signed circular difference a - b in (-180, 180].
inline double circular_diff(double a, double b) {
    double d = std::fmod(a - b, 360.0);
    if (d <= -180.0) d += 360.0;
    if (d > 180.0) d -= 360.0;
    return d;
}

inline std::uint8_t to_u8(double x) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(x), 0l, 255l));
}

}  // namespace

HsvImage rgb_to_hsv(const ImageU8& rgb) {
    if (rgb.channels != 3) throw_data("rgb_to_hsv: expected a 3-channel image");
    HsvImage out(rgb.width, rgb.height);
    const std::size_t n = static_cast<std::size_t>(rgb.width) * rgb.height;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = rgb.data[i * 3 + 0] / 255.0;
        const double g = rgb.data[i * 3 + 1] / 255.0;
        const double b = rgb.data[i * 3 + 2] / 255.0;
        const double maxc = std::max({r, g, b});
        const double minc = std::min({r, g, b});
        const double delta = maxc - minc;

        double h = 0.0;
        if (delta > 0.0) {
            if (maxc == r)
                h = 60.0 * ((g - b) / delta);
            else if (maxc == g)
                h = 60.0 * ((b - r) / delta + 2.0);
            else
                h = 60.0 * ((r - g) / delta + 4.0);
            h = wrap_degrees(h);
        }
        out.h[i] = static_cast<float>(h);
        out.s[i] = static_cast<float>(maxc > 0.0 ? delta / maxc : 0.0);
        out.v[i] = static_cast<float>(maxc);
    }
    return out;
}

std::array<std::uint8_t, 3> rgb_to_hsv_pixel_inverse(float hf, float sf, float vf) {
    const double h = wrap_degrees(hf);
    const double s = std::clamp(static_cast<double>(sf), 0.0, 1.0);
    const double v = std::clamp(static_cast<double>(vf), 0.0, 1.0);

    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1)      { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else             { r = c; b = x; }
    const double m = v - c;
    return {to_u8((r + m) * 255.0), to_u8((g + m) * 255.0), to_u8((b + m) * 255.0)};
}

ImageU8 hsv_to_rgb(const HsvImage& hsv) {
    ImageU8 out(hsv.width, hsv.height, 3);
    const std::size_t n = static_cast<std::size_t>(hsv.width) * hsv.height;
    for (std::size_t i = 0; i < n; ++i) {
        const auto px = rgb_to_hsv_pixel_inverse(hsv.h[i], hsv.s[i], hsv.v[i]);
        out.data[i * 3 + 0] = px[0];
        out.data[i * 3 + 1] = px[1];
        out.data[i * 3 + 2] = px[2];
    }
    return out;
}

int otsu_threshold(const std::array<std::uint64_t, 256>& histogram) {
    std::uint64_t total = 0;
    int occupied = 0;
    for (auto c : histogram) {
        total += c;
        occupied += c > 0;
    }
    if (total == 0) throw_data("otsu_threshold: empty histogram");
    if (occupied < 2) throw_data("otsu_threshold: no threshold exists (all mass in one bin)");

    // Integer prefix aggregates keep tie plateaus exactly equal in the
    // double-precision variance that follows.
    std::uint64_t weighted_total = 0;
    for (int b = 0; b < 256; ++b) weighted_total += histogram[static_cast<std::size_t>(b)] * static_cast<std::uint64_t>(b);

    int best_t = 0;
    double best_var = -1.0;
    std::uint64_t n0 = 0, sum0 = 0;
    for (int t = 0; t < 256; ++t) {
        n0 += histogram[static_cast<std::size_t>(t)];
        sum0 += histogram[static_cast<std::size_t>(t)] * static_cast<std::uint64_t>(t);
        const std::uint64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) {
            if (best_var < 0.0) { best_var = 0.0; best_t = t; }
            continue;
        }
        const double w0 = static_cast<double>(n0) / static_cast<double>(total);
        const double w1 = static_cast<double>(n1) / static_cast<double>(total);
        const double mu0 = static_cast<double>(sum0) / static_cast<double>(n0);
        const double mu1 = static_cast<double>(weighted_total - sum0) / static_cast<double>(n1);
        const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    return best_t;
}

BinaryMask erode(const BinaryMask& mask, int se_radius) {
    if (se_radius < 1) throw_data("erode: structuring element radius must be >= 1");
    BinaryMask out(mask.width, mask.height, 0);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            bool all = true;
            for (int dy = -se_radius; all && dy <= se_radius; ++dy)
                for (int dx = -se_radius; dx <= se_radius; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (!mask.in_bounds(nx, ny) || !mask.at(nx, ny)) {
                        all = false;
                        break;
                    }
                }
            out.at(x, y) = all ? 1 : 0;
        }
    return out;
}

BinaryMask dilate(const BinaryMask& mask, int se_radius) {
    if (se_radius < 1) throw_data("dilate: structuring element radius must be >= 1");
    BinaryMask out(mask.width, mask.height, 0);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            bool any = false;
            for (int dy = -se_radius; !any && dy <= se_radius; ++dy)
                for (int dx = -se_radius; dx <= se_radius; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (mask.in_bounds(nx, ny) && mask.at(nx, ny)) {
                        any = true;
                        break;
                    }
                }
            out.at(x, y) = any ? 1 : 0;
        }
    return out;
}

BinaryMask morph_open(const BinaryMask& mask, int se_radius) { return dilate(erode(mask, se_radius), se_radius); }

BinaryMask morph_close(const BinaryMask& mask, int se_radius) { return erode(dilate(mask, se_radius), se_radius); }

BinaryMask tissue_mask(const ImageU8& rgb) {
    const HsvImage hsv = rgb_to_hsv(rgb);
    std::array<std::uint64_t, 256> hist{};
    const std::size_t n = hsv.h.size();
    for (std::size_t i = 0; i < n; ++i) {
        const long bin = std::lround(static_cast<double>(hsv.s[i]) * 255.0);
        hist[static_cast<std::size_t>(std::clamp(bin, 0l, 255l))]++;
    }
    const int t = otsu_threshold(hist);

    BinaryMask mask(rgb.width, rgb.height, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const double s255 = static_cast<double>(hsv.s[i]) * 255.0;
        const double v = hsv.v[i];
        mask.pixels[i] = (s255 > t && v >= kTissueValueLo && v <= kTissueValueHi) ? 1 : 0;
    }
    return morph_close(morph_open(mask, 1), 1);
}

BinaryMask tissue_mask(const Slide& slide) { return tissue_mask(slide.to_image()); }

ColorTemplate compute_color_stats(const HsvImage& hsv, const BinaryMask& mask) {
    if (mask.width != hsv.width || mask.height != hsv.height)
        throw_data("compute_color_stats: mask dimensions do not match image");

    std::size_t n = 0;
    double sum_s = 0, sum_s2 = 0, sum_v = 0, sum_v2 = 0;
    double sum_cos = 0, sum_sin = 0;
    const std::size_t total = hsv.h.size();
    for (std::size_t i = 0; i < total; ++i) {
        if (!mask.pixels[i]) continue;
        ++n;
        const double s = hsv.s[i], v = hsv.v[i], h = hsv.h[i] * kDegToRad;
        sum_s += s;
        sum_s2 += s * s;
        sum_v += v;
        sum_v2 += v * v;
        sum_cos += std::cos(h);
        sum_sin += std::sin(h);
    }
    if (n < 2) throw_data("compute_color_stats: fewer than 2 masked pixels");

    const double inv = 1.0 / static_cast<double>(n);
    ColorTemplate tpl;
    tpl.mean_s = sum_s * inv;
    tpl.mean_v = sum_v * inv;
    tpl.std_s = std::max(kStdFloorSv, std::sqrt(std::max(0.0, sum_s2 * inv - tpl.mean_s * tpl.mean_s)));
    tpl.std_v = std::max(kStdFloorSv, std::sqrt(std::max(0.0, sum_v2 * inv - tpl.mean_v * tpl.mean_v)));

    const double rbar = std::min(1.0, std::sqrt(sum_cos * sum_cos + sum_sin * sum_sin) * inv);
    tpl.mean_h = wrap_degrees(std::atan2(sum_sin, sum_cos) * kRadToDeg);
    const double circ_std = rbar > 0.0 ? std::sqrt(std::max(0.0, -2.0 * std::log(rbar))) * kRadToDeg : 360.0;
    tpl.std_h = std::max(kStdFloorHueDeg, circ_std);
    return tpl;
}

ColorTemplate compute_color_stats(const ImageU8& rgb, const BinaryMask& mask) {
    return compute_color_stats(rgb_to_hsv(rgb), mask);
}

ImageU8 standardize_color(const ImageU8& rgb, const BinaryMask& mask, const ColorTemplate& tpl) {
    if (mask.width != rgb.width || mask.height != rgb.height)
        throw_data("standardize_color: mask dimensions do not match image");
    if (tpl.std_h <= 0 || tpl.std_s <= 0 || tpl.std_v <= 0)
        throw_data("standardize_color: template stds must be positive");

    const HsvImage hsv = rgb_to_hsv(rgb);
    const ColorTemplate src = compute_color_stats(hsv, mask);

    ImageU8 out = rgb;
    const std::size_t n = hsv.h.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.pixels[i]) continue;
        const double h = tpl.mean_h + circular_diff(hsv.h[i], src.mean_h) * (tpl.std_h / src.std_h);
        const double s = std::clamp((hsv.s[i] - src.mean_s) / src.std_s * tpl.std_s + tpl.mean_s, 0.0, 1.0);
        const double v = std::clamp((hsv.v[i] - src.mean_v) / src.std_v * tpl.std_v + tpl.mean_v, 0.0, 1.0);
        const auto px = rgb_to_hsv_pixel_inverse(static_cast<float>(wrap_degrees(h)),
                                                 static_cast<float>(s), static_cast<float>(v));
        out.data[i * 3 + 0] = px[0];
        out.data[i * 3 + 1] = px[1];
        out.data[i * 3 + 2] = px[2];
    }
    return out;
}

ColorTemplate read_color_template(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open color template: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw_data("invalid color template JSON: " + std::string(e.what()));
    }
    ColorTemplate tpl;
    try {
        tpl.mean_h = j.at("mean_h").get<double>();
        tpl.mean_s = j.at("mean_s").get<double>();
        tpl.mean_v = j.at("mean_v").get<double>();
        tpl.std_h = j.at("std_h").get<double>();
        tpl.std_s = j.at("std_s").get<double>();
        tpl.std_v = j.at("std_v").get<double>();
    } catch (const nlohmann::json::exception&) {
        throw_data("color template missing required fields");
    }
    if (tpl.std_h <= 0 || tpl.std_s <= 0 || tpl.std_v <= 0)
        throw_data("color template stds must be positive");
    return tpl;
}

void write_color_template(const ColorTemplate& tpl, const std::filesystem::path& path) {
    nlohmann::json j{{"mean_h", tpl.mean_h}, {"mean_s", tpl.mean_s}, {"mean_v", tpl.mean_v},
                     {"std_h", tpl.std_h},   {"std_s", tpl.std_s},   {"std_v", tpl.std_v}};
    std::ofstream out(path);
    if (!out) throw_io("cannot write color template: " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace ptri
