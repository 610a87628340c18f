#pragma once

// Shared test helpers: independent reference implementations (naive loops,
// exact integer arithmetic, set algebra) and a finite-difference gradient
// harness. Everything here is deliberately written in the most obvious way
// possible, favoring transparency over speed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ptri/graph.hpp"
#include "ptri/image.hpp"
#include "ptri/nn_ops.hpp"
#include "ptri/rng.hpp"

namespace oracle {

using ptri::BinaryMask;
using ptri::ImageU8;
using ptri::Rng;
using ptri::Tensor;

// ---------------------------------------------------------------- temp dirs

inline std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "ptri_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// ------------------------------------------------------------- random data

inline ImageU8 random_image(Rng& rng, int w, int h, int c = 3) {
    ImageU8 img(w, h, c);
    for (auto& px : img.data) px = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    return img;
}

inline BinaryMask random_mask(Rng& rng, int w, int h, double p = 0.5) {
    BinaryMask m(w, h);
    for (auto& px : m.pixels) px = rng.bernoulli(p) ? 1 : 0;
    return m;
}

template <typename S>
Tensor<S> random_tensor(Rng& rng, const std::vector<int>& shape, double lo = -1.0, double hi = 1.0) {
    Tensor<S> t(shape);
    for (std::ptrdiff_t i = 0; i < t.numel(); ++i)
        t.data[i] = static_cast<S>(rng.uniform(lo, hi));
    return t;
}

inline bool images_equal(const ImageU8& a, const ImageU8& b) {
    return a.same_dims(b) && a.data == b.data;
}

inline int max_pixel_diff(const ImageU8& a, const ImageU8& b) {
    int worst = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::abs(int(a.data[i]) - int(b.data[i])));
    return worst;
}

// -------------------------------------------------------- naive convolution

struct NaiveGeom {
    int out_h = 0, out_w = 0, pad_top = 0, pad_left = 0;
};

// Output-size rule restated from the op contract: valid drops partial
// windows; same keeps ceil(in/stride) and splits the needed padding with the
// smaller half on the top/left.
inline NaiveGeom naive_geom(int h, int w, int k, int stride, ptri::Pad pad) {
    NaiveGeom g;
    if (pad == ptri::Pad::Valid) {
        g.out_h = (h - k) / stride + 1;
        g.out_w = (w - k) / stride + 1;
        return g;
    }
    g.out_h = (h + stride - 1) / stride;
    g.out_w = (w + stride - 1) / stride;
    const int pad_h = std::max(0, (g.out_h - 1) * stride + k - h);
    const int pad_w = std::max(0, (g.out_w - 1) * stride + k - w);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
    return g;
}

// Six explicit loops, double accumulation, zero padding spelled out.
template <typename S>
Tensor<S> naive_conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride,
                       ptri::Pad pad) {
    const int n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3);
    const int k = w.dim(0), co = w.dim(3);
    const NaiveGeom g = naive_geom(h, wd, k, stride, pad);
    Tensor<S> out({n, g.out_h, g.out_w, co});
    auto xat = [&](int nn, int y, int xx, int c) {
        return x.data[((static_cast<std::ptrdiff_t>(nn) * h + y) * wd + xx) * ci + c];
    };
    auto wat = [&](int ky, int kx, int c, int o) {
        return w.data[((static_cast<std::ptrdiff_t>(ky) * k + kx) * ci + c) * co + o];
    };
    std::ptrdiff_t idx = 0;
    for (int nn = 0; nn < n; ++nn)
        for (int oy = 0; oy < g.out_h; ++oy)
            for (int ox = 0; ox < g.out_w; ++ox)
                for (int o = 0; o < co; ++o) {
                    double acc = static_cast<double>(b.data[o]);
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            for (int c = 0; c < ci; ++c) {
                                const int iy = oy * stride + ky - g.pad_top;
                                const int ix = ox * stride + kx - g.pad_left;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                acc += static_cast<double>(xat(nn, iy, ix, c)) *
                                       static_cast<double>(wat(ky, kx, c, o));
                            }
                    out.data[idx++] = static_cast<S>(acc);
                }
    return out;
}

template <typename S>
Tensor<S> naive_depthwise(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride,
                          ptri::Pad pad) {
    const int n = x.dim(0), h = x.dim(1), wd = x.dim(2), c = x.dim(3);
    const int k = w.dim(0);
    const NaiveGeom g = naive_geom(h, wd, k, stride, pad);
    Tensor<S> out({n, g.out_h, g.out_w, c});
    std::ptrdiff_t idx = 0;
    for (int nn = 0; nn < n; ++nn)
        for (int oy = 0; oy < g.out_h; ++oy)
            for (int ox = 0; ox < g.out_w; ++ox)
                for (int ch = 0; ch < c; ++ch) {
                    double acc = static_cast<double>(b.data[ch]);
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride + ky - g.pad_top;
                            const int ix = ox * stride + kx - g.pad_left;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                            acc += static_cast<double>(
                                       x.data[((static_cast<std::ptrdiff_t>(nn) * h + iy) * wd + ix) * c + ch]) *
                                   static_cast<double>(w.data[(static_cast<std::ptrdiff_t>(ky) * k + kx) * c + ch]);
                        }
                    out.data[idx++] = static_cast<S>(acc);
                }
    return out;
}

// Embeds a depthwise kernel [k,k,C] into a full conv kernel [k,k,C,C] that is
// zero off the channel diagonal.
template <typename S>
Tensor<S> embed_depthwise_kernel(const Tensor<S>& w) {
    const int k = w.dim(0), c = w.dim(2);
    Tensor<S> full({k, k, c, c});
    for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx)
            for (int ch = 0; ch < c; ++ch)
                full.data[((static_cast<std::ptrdiff_t>(ky) * k + kx) * c + ch) * c + ch] =
                    w.data[(static_cast<std::ptrdiff_t>(ky) * k + kx) * c + ch];
    return full;
}

// --------------------------------------------------- exact otsu brute force

// Maximizes the between-class variance (s0*w1 - s1*w0)^2 / (w0*w1) with the
// fractions cross-multiplied in 128-bit integers, so the argmax (and its
// smallest-t tie rule) is exact. Returns -1 when no valid split exists.
inline int brute_otsu(const std::array<std::uint64_t, 256>& hist) {
    std::uint64_t total = 0, weighted = 0;
    for (int v = 0; v < 256; ++v) {
        total += hist[static_cast<std::size_t>(v)];
        weighted += hist[static_cast<std::size_t>(v)] * static_cast<std::uint64_t>(v);
    }
    int best = -1;
    __int128 best_num = 0, best_den = 1;
    std::uint64_t w0 = 0, s0 = 0;
    for (int t = 0; t < 256; ++t) {
        w0 += hist[static_cast<std::size_t>(t)];
        s0 += hist[static_cast<std::size_t>(t)] * static_cast<std::uint64_t>(t);
        const std::uint64_t w1 = total - w0;
        const std::uint64_t s1 = weighted - s0;
        if (w0 == 0 || w1 == 0) continue;
        const __int128 d = static_cast<__int128>(s0) * w1 - static_cast<__int128>(s1) * w0;
        const __int128 num = d * d;
        const __int128 den = static_cast<__int128>(w0) * w1;
        if (best < 0 || num * best_den > best_num * den) {
            best = t;
            best_num = num;
            best_den = den;
        }
    }
    return best;
}

// ----------------------------------------------- set-algebra morphology

// Dilation as a union of translates of the foreground point set; erosion as
// an intersection, with out-of-bounds treated as background.
inline BinaryMask set_dilate(const BinaryMask& m, int r) {
    std::set<std::pair<int, int>> fg;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y)) fg.emplace(x, y);
    BinaryMask out(m.width, m.height);
    for (const auto& [x, y] : fg)
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx)
                if (out.in_bounds(x + dx, y + dy)) out.at(x + dx, y + dy) = 1;
    return out;
}

inline BinaryMask set_erode(const BinaryMask& m, int r) {
    std::set<std::pair<int, int>> keep;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y)) keep.emplace(x, y);
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            std::set<std::pair<int, int>> shifted;
            for (int y = 0; y < m.height; ++y)
                for (int x = 0; x < m.width; ++x)
                    if (m.in_bounds(x + dx, y + dy) && m.at(x + dx, y + dy)) shifted.emplace(x, y);
            std::set<std::pair<int, int>> inter;
            std::set_intersection(keep.begin(), keep.end(), shifted.begin(), shifted.end(),
                                  std::inserter(inter, inter.begin()));
            keep = std::move(inter);
        }
    BinaryMask out(m.width, m.height);
    for (const auto& [x, y] : keep) out.at(x, y) = 1;
    return out;
}

inline bool mask_subset(const BinaryMask& a, const BinaryMask& b) {
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
        if (a.pixels[i] && !b.pixels[i]) return false;
    return true;
}

inline bool masks_equal(const BinaryMask& a, const BinaryMask& b) {
    return a.width == b.width && a.height == b.height && a.pixels == b.pixels;
}

inline double mask_jaccard(const BinaryMask& a, const BinaryMask& b) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const bool pa = a.pixels[i] != 0, pb = b.pixels[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// ------------------------------------------------------ rank-sum AUC oracle

// Pairwise probability that a positive outscores a negative, ties at half
// credit. Quadratic on purpose.
inline double mann_whitney_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double u = 0;
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        ++n_pos;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] == 1) continue;
            if (scores[i] > scores[j])
                u += 1.0;
            else if (scores[i] == scores[j])
                u += 0.5;
        }
    }
    for (int l : labels) n_neg += l != 1;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// ----------------------------------------------------------- chi-square

inline double chi_square_stat(const std::vector<std::size_t>& observed, double expected) {
    double stat = 0;
    for (std::size_t o : observed) {
        const double d = static_cast<double>(o) - expected;
        stat += d * d / expected;
    }
    return stat;
}

// ----------------------------------------------- finite-difference harness

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

struct FdOutcome {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // samples whose +-eps interval crossed a kink
};

// Piecewise-region signature of every nonlinearity inside one layer. Two
// evaluations with identical signatures lie on the same affine piece, so a
// central difference between them is exact; differing signatures mean the
// finite-difference sample straddles a kink and proves nothing either way.
inline void append_region_codes(std::vector<std::int8_t>& sig, const Tensor<double>& z,
                                bool six_capped) {
    for (std::ptrdiff_t i = 0; i < z.numel(); ++i) {
        std::int8_t code = z.data[i] > 0 ? 1 : 0;
        if (six_capped && z.data[i] > 6) code = 2;
        sig.push_back(code);
    }
}

inline void append_maxpool_codes(std::vector<std::int8_t>& sig, const Tensor<double>& x, int pool,
                                 int stride) {
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int oh = (h - pool) / stride + 1, ow = (w - pool) / stride + 1;
    for (int nn = 0; nn < n; ++nn)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int ch = 0; ch < c; ++ch) {
                    double best = -1e300;
                    std::int8_t arg = 0;
                    for (int ky = 0; ky < pool; ++ky)
                        for (int kx = 0; kx < pool; ++kx) {
                            const double v =
                                x.data[((static_cast<std::ptrdiff_t>(nn) * h + oy * stride + ky) * w +
                                        ox * stride + kx) *
                                           c +
                                       ch];
                            if (v > best) {
                                best = v;
                                arg = static_cast<std::int8_t>(ky * pool + kx);
                            }
                        }
                    sig.push_back(arg);
                }
}

inline std::vector<std::int8_t> layer_region_signature(const ptri::LayerSpec& spec,
                                                       const std::vector<Tensor<double>>& p,
                                                       const Tensor<double>& x) {
    using ptri::LayerKind;
    std::vector<std::int8_t> sig;
    switch (spec.kind) {
        case LayerKind::ReLU:
            append_region_codes(sig, x, false);
            break;
        case LayerKind::ReLU6:
            append_region_codes(sig, x, true);
            break;
        case LayerKind::MaxPool2D:
            append_maxpool_codes(sig, x, spec.kernel, spec.stride);
            break;
        case LayerKind::InvertedResidual: {
            const Tensor<double> z1 = ptri::pointwise_forward(x, p[0], p[1]);
            append_region_codes(sig, z1, true);
            const Tensor<double> z2 =
                ptri::depthwise_forward(ptri::relu6_forward(z1), p[2], p[3], spec.stride, ptri::Pad::Same);
            append_region_codes(sig, z2, true);
            break;
        }
        case LayerKind::ResidualBottleneck: {
            const Tensor<double> z1 = ptri::pointwise_forward(x, p[0], p[1]);
            append_region_codes(sig, z1, false);
            const Tensor<double> z2 =
                ptri::conv2d_forward(ptri::relu_forward(z1), p[2], p[3], spec.stride, ptri::Pad::Same);
            append_region_codes(sig, z2, false);
            Tensor<double> pre = ptri::pointwise_forward(ptri::relu_forward(z2), p[4], p[5]);
            if (spec.has_projection())
                pre.data += ptri::conv2d_forward(x, p[6], p[7], spec.stride, ptri::Pad::Valid).data;
            else
                pre.data += x.data;
            append_region_codes(sig, pre, false);
            break;
        }
        default:
            break;  // smooth layers have a single region
    }
    return sig;
}

// Central difference on one scalar slot. `loss` re-evaluates the function,
// `signature` captures the active region pattern; a sample whose endpoints
// disagree with the base signature is discarded as numerically meaningless
// rather than compared.
template <typename LossFn, typename SigFn>
void fd_check_slot(double& slot, double analytic, LossFn&& loss, SigFn&& signature,
                   const std::vector<std::int8_t>& base_sig, double eps, double tol,
                   FdOutcome& out) {
    const double orig = slot;
    slot = orig + eps;
    const double up = loss();
    slot = orig - eps;
    const double down = loss();
    slot = orig;
    const double fd = (up - down) / (2.0 * eps);
    const double err = rel_err(analytic, fd);
    if (err >= tol) {
        slot = orig + eps;
        const bool up_ok = signature() == base_sig;
        slot = orig - eps;
        const bool down_ok = signature() == base_sig;
        slot = orig;
        if (!up_ok || !down_ok) {
            ++out.skipped;
            return;
        }
    }
    ++out.checked;
    out.max_rel_err = std::max(out.max_rel_err, err);
}

// Checks every parameter element and every input element of one layer against
// the gradient of a fixed random projection of the output.
inline FdOutcome check_layer_gradients(const ptri::LayerSpec& spec, const std::vector<int>& x_shape,
                                       std::uint64_t seed, double eps = 1e-3, double tol = 1e-4) {
    Rng rng(seed);
    std::vector<Tensor<double>> p = ptri::detail::init_layer_params<double>(spec, rng);
    for (auto& t : p)  // nonzero biases so their gradient paths are exercised
        if (t.rank() == 1)
            for (std::ptrdiff_t i = 0; i < t.numel(); ++i) t.data[i] = rng.uniform(-0.1, 0.1);
    Tensor<double> x = random_tensor<double>(rng, x_shape);
    const Tensor<double> base_out = ptri::forward_layer(spec, p, x);
    const Tensor<double> proj = random_tensor<double>(rng, base_out.shape);

    auto loss = [&]() {
        const Tensor<double> out = ptri::forward_layer(spec, p, x);
        return (out.data * proj.data).sum();
    };
    auto signature = [&]() { return layer_region_signature(spec, p, x); };
    const std::vector<std::int8_t> base_sig = signature();

    std::vector<Tensor<double>> pg;
    Tensor<double> gx = ptri::backward_layer(spec, p, x, proj, pg);

    FdOutcome out;
    for (std::size_t t = 0; t < p.size(); ++t)
        for (std::ptrdiff_t i = 0; i < p[t].numel(); ++i)
            fd_check_slot(p[t].data[i], pg[t].data[i], loss, signature, base_sig, eps, tol, out);
    for (std::ptrdiff_t i = 0; i < x.numel(); ++i)
        fd_check_slot(x.data[i], gx.data[i], loss, signature, base_sig, eps, tol, out);
    return out;
}

inline std::vector<std::int8_t> model_region_signature(const ptri::ModelGraphT<double>& m,
                                                       const Tensor<double>& x) {
    std::vector<std::int8_t> sig;
    Tensor<double> cur = x;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        auto part = layer_region_signature(m.layers[i], m.params[i], cur);
        sig.insert(sig.end(), part.begin(), part.end());
        cur = ptri::forward_layer(m.layers[i], m.params[i], cur);
    }
    return sig;
}

// End-to-end check of d(mean cross-entropy)/d(parameter) on a random sample
// of parameter slots. The step is much smaller than in the per-layer checks:
// a deep chain multiplies the chance that +-eps pushes some downstream
// activation across a kink, and 64-bit precision leaves roundoff negligible
// even at 1e-5.
inline FdOutcome check_model_gradients(ptri::ModelGraphT<double>& model, const Tensor<double>& x,
                                       const std::vector<int>& labels, std::size_t sample_count,
                                       std::uint64_t seed, double eps = 1e-5, double tol = 1e-3) {
    ptri::ParamGrads<double> grads;
    model.loss_and_gradients(x, labels, grads);

    auto loss = [&]() {
        return static_cast<double>(ptri::softmax_cross_entropy(model.forward(x), labels).loss);
    };
    auto signature = [&]() { return model_region_signature(model, x); };
    const std::vector<std::int8_t> base_sig = signature();

    struct Slot {
        std::size_t layer, tensor;
        std::ptrdiff_t elem;
    };
    std::vector<Slot> all;
    for (std::size_t l = 0; l < model.params.size(); ++l)
        for (std::size_t t = 0; t < model.params[l].size(); ++t)
            for (std::ptrdiff_t e = 0; e < model.params[l][t].numel(); ++e) all.push_back({l, t, e});

    Rng rng(seed);
    for (std::size_t i = all.size(); i > 1; --i)
        std::swap(all[i - 1], all[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    if (all.size() > sample_count) all.resize(sample_count);

    FdOutcome out;
    for (const Slot& s : all)
        fd_check_slot(model.params[s.layer][s.tensor].data[s.elem], grads[s.layer][s.tensor].data[s.elem],
                      loss, signature, base_sig, eps, tol, out);
    return out;
}

}  // namespace oracle
