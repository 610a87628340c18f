#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ptri/error.hpp"
#include "ptri/graph.hpp"
#include "ptri/nn_ops.hpp"

#include "oracles.hpp"

using namespace ptri;
using oracle::FdOutcome;
using oracle::Rng;

namespace {

Tensor<float> filled(const std::vector<int>& shape, float v) {
    Tensor<float> t(shape);
    t.data.setConstant(v);
    return t;
}

void check_close(const Tensor<float>& a, const Tensor<float>& b, double tol) {
    REQUIRE(a.shape == b.shape);
    double worst = 0;
    for (std::ptrdiff_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, std::abs(double(a.data[i]) - double(b.data[i])));
    CHECK(worst < tol);
}

void run_layer_fd(const LayerSpec& spec, const std::vector<int>& x_shape, int seeds,
                  double lo = -1.0, double hi = 1.0) {
    for (int s = 0; s < seeds; ++s) {
        Rng rng(1000 + static_cast<std::uint64_t>(s) * 17);
        std::vector<Tensor<double>> p = detail::init_layer_params<double>(spec, rng);
        for (auto& t : p)
            if (t.rank() == 1)
                for (std::ptrdiff_t i = 0; i < t.numel(); ++i) t.data[i] = rng.uniform(-0.1, 0.1);
        Tensor<double> x = oracle::random_tensor<double>(rng, x_shape, lo, hi);
        Tensor<double> base_out = forward_layer(spec, p, x);
        Tensor<double> proj = oracle::random_tensor<double>(rng, base_out.shape);

        auto loss = [&]() { return (forward_layer(spec, p, x).data * proj.data).sum(); };
        auto signature = [&]() { return oracle::layer_region_signature(spec, p, x); };
        const auto base_sig = signature();

        std::vector<Tensor<double>> pg;
        Tensor<double> gx = backward_layer(spec, p, x, proj, pg);

        FdOutcome out;
        for (std::size_t t = 0; t < p.size(); ++t)
            for (std::ptrdiff_t i = 0; i < p[t].numel(); ++i)
                oracle::fd_check_slot(p[t].data[i], pg[t].data[i], loss, signature, base_sig, 1e-3,
                                      1e-4, out);
        for (std::ptrdiff_t i = 0; i < x.numel(); ++i)
            oracle::fd_check_slot(x.data[i], gx.data[i], loss, signature, base_sig, 1e-3, 1e-4, out);

        INFO("layer " << spec.name << " seed " << s << " checked " << out.checked << " skipped "
                      << out.skipped);
        CHECK(out.max_rel_err < 1e-4);
        CHECK(out.checked > 0);
        CHECK(out.skipped * 5 <= out.checked + out.skipped);
    }
}

}  // namespace

TEST_CASE("conv geometry follows the valid and same rules") {
    ConvGeom g = conv_geometry(8, 8, 3, 1, Pad::Valid);
    CHECK(g.out_h == 6);
    CHECK(g.out_w == 6);
    CHECK(g.pad_top == 0);

    g = conv_geometry(8, 8, 3, 1, Pad::Same);
    CHECK(g.out_h == 8);
    CHECK(g.pad_top == 1);
    CHECK(g.pad_left == 1);

    g = conv_geometry(5, 5, 3, 2, Pad::Same);
    CHECK(g.out_h == 3);
    CHECK(g.pad_top == 1);

    // odd total padding puts the smaller half on top/left
    g = conv_geometry(4, 4, 3, 2, Pad::Same);
    CHECK(g.out_h == 2);
    CHECK(g.pad_top == 0);

    g = conv_geometry(6, 6, 2, 2, Pad::Valid);
    CHECK(g.out_h == 3);
}

TEST_CASE("1x1 identity kernel reproduces its input") {
    Rng rng(7);
    Tensor<float> x = oracle::random_tensor<float>(rng, {2, 5, 5, 1});
    Tensor<float> w = filled({1, 1, 1, 1}, 1.0f);
    Tensor<float> b({1});
    Tensor<float> y = conv2d_forward(x, w, b, 1, Pad::Valid);
    REQUIRE(y.shape == x.shape);
    for (std::ptrdiff_t i = 0; i < x.numel(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("3x3 ones kernel over 3x3 ones input sums to 9") {
    Tensor<float> x = filled({1, 3, 3, 1}, 1.0f);
    Tensor<float> w = filled({3, 3, 1, 1}, 1.0f);
    Tensor<float> b({1});
    Tensor<float> y = conv2d_forward(x, w, b, 1, Pad::Valid);
    REQUIRE(y.shape == std::vector<int>{1, 1, 1, 1});
    CHECK(y.data[0] == doctest::Approx(9.0).epsilon(1e-7));
}

TEST_CASE("conv2d matches the naive loop oracle") {
    Rng rng(42);
    for (int trial = 0; trial < 6; ++trial) {
        const int stride = trial % 2 ? 2 : 1;
        const Pad pad = trial % 3 ? Pad::Same : Pad::Valid;
        Tensor<float> x = oracle::random_tensor<float>(rng, {2, 8, 8, 3});
        Tensor<float> w = oracle::random_tensor<float>(rng, {3, 3, 3, 4});
        Tensor<float> b = oracle::random_tensor<float>(rng, {4});
        check_close(conv2d_forward(x, w, b, stride, pad), oracle::naive_conv2d(x, w, b, stride, pad),
                    1e-5);
    }
    // non-square input, even kernel
    Tensor<float> x = oracle::random_tensor<float>(rng, {1, 7, 5, 2});
    Tensor<float> w = oracle::random_tensor<float>(rng, {2, 2, 2, 3});
    Tensor<float> b = oracle::random_tensor<float>(rng, {3});
    check_close(conv2d_forward(x, w, b, 2, Pad::Same), oracle::naive_conv2d(x, w, b, 2, Pad::Same),
                1e-5);
}

TEST_CASE("depthwise equals a block-diagonal full convolution") {
    Rng rng(3);
    Tensor<float> x = oracle::random_tensor<float>(rng, {2, 6, 6, 8});
    Tensor<float> w = oracle::random_tensor<float>(rng, {3, 3, 8});
    Tensor<float> b = oracle::random_tensor<float>(rng, {8});
    Tensor<float> dw = depthwise_forward(x, w, b, 1, Pad::Same);
    Tensor<float> full = oracle::naive_conv2d(x, oracle::embed_depthwise_kernel(w), b, 1, Pad::Same);
    check_close(dw, full, 1e-5);
    check_close(dw, oracle::naive_depthwise(x, w, b, 1, Pad::Same), 1e-5);
}

TEST_CASE("single-channel depthwise is exactly a single-channel conv") {
    Rng rng(11);
    Tensor<float> x = oracle::random_tensor<float>(rng, {1, 7, 7, 1});
    Tensor<float> wd = oracle::random_tensor<float>(rng, {3, 3, 1});
    Tensor<float> b = oracle::random_tensor<float>(rng, {1});
    Tensor<float> wc({3, 3, 1, 1});
    wc.data = wd.data;
    check_close(depthwise_forward(x, wd, b, 2, Pad::Valid), conv2d_forward(x, wc, b, 2, Pad::Valid),
                1e-6);
}

TEST_CASE("depthwise 3x3 over 8 channels carries 72 weights and 8 biases") {
    LayerSpec spec{LayerKind::DepthwiseConv2D, "dw", 3, 1, Pad::Same, 8, 8, 0};
    const auto shapes = layer_param_shapes(spec);
    REQUIRE(shapes.size() == 2);
    CHECK(shapes[0] == std::vector<int>{3, 3, 8});
    CHECK(shapes[1] == std::vector<int>{8});
}

TEST_CASE("pointwise equals conv2d with a 1x1 kernel") {
    Rng rng(13);
    Tensor<float> x = oracle::random_tensor<float>(rng, {2, 4, 4, 5});
    Tensor<float> w = oracle::random_tensor<float>(rng, {1, 1, 5, 7});
    Tensor<float> b = oracle::random_tensor<float>(rng, {7});
    check_close(pointwise_forward(x, w, b), conv2d_forward(x, w, b, 1, Pad::Valid), 1e-6);
}

TEST_CASE("dense multiplies a flattened input") {
    Tensor<float> x({1, 3});
    x.data << 1.0f, 2.0f, 3.0f;
    Tensor<float> w({3, 2});
    w.data << 1, 0, 0, 1, 1, 1;  // row-major [in,out]
    Tensor<float> b({2});
    b.data << 0.5f, -0.5f;
    Tensor<float> y = dense_forward(x, w, b);
    REQUIRE(y.shape == std::vector<int>{1, 2});
    CHECK(y.data[0] == doctest::Approx(1 + 3 + 0.5));
    CHECK(y.data[1] == doctest::Approx(2 + 3 - 0.5));

    // rank-4 inputs flatten implicitly
    Rng rng(5);
    Tensor<float> x4 = oracle::random_tensor<float>(rng, {2, 2, 2, 3});
    Tensor<float> w4 = oracle::random_tensor<float>(rng, {12, 4});
    Tensor<float> b4 = oracle::random_tensor<float>(rng, {4});
    Tensor<float> y4 = dense_forward(x4, w4, b4);
    CHECK(y4.shape == std::vector<int>{2, 4});
    Tensor<float> flat = x4;
    flat.shape = {2, 12};
    check_close(y4, dense_forward(flat, w4, b4), 0.0 + 1e-12);
}

TEST_CASE("relu6 clamps and gates its gradient") {
    Tensor<float> x({1, 3});
    x.data << 3.0f, 7.0f, -1.0f;
    Tensor<float> y = relu6_forward(x);
    CHECK(y.data[0] == 3.0f);
    CHECK(y.data[1] == 6.0f);
    CHECK(y.data[2] == 0.0f);
    Tensor<float> g = filled({1, 3}, 1.0f);
    Tensor<float> gx = relu6_backward(x, g);
    CHECK(gx.data[0] == 1.0f);
    CHECK(gx.data[1] == 0.0f);
    CHECK(gx.data[2] == 0.0f);
}

TEST_CASE("maxpool picks window maxima and routes gradient to the first max") {
    Tensor<float> x({1, 4, 4, 1});
    x.data << 1, 2, 5, 3,
              4, 0, 1, 1,
              7, 7, 2, 2,
              6, 1, 2, 2;
    Tensor<float> y = maxpool_forward(x, 2, 2);
    REQUIRE(y.shape == std::vector<int>{1, 2, 2, 1});
    CHECK(y.data[0] == 4.0f);
    CHECK(y.data[1] == 5.0f);
    CHECK(y.data[2] == 7.0f);  // tied pair in the bottom-left window
    CHECK(y.data[3] == 2.0f);

    Tensor<float> g = filled({1, 2, 2, 1}, 1.0f);
    Tensor<float> gx = maxpool_backward(x, 2, 2, g);
    CHECK(gx.data[4] == 1.0f);   // the 4 at row 1, col 0
    CHECK(gx.data[2] == 1.0f);   // the 5
    CHECK(gx.data[8] == 1.0f);   // first of the tied 7s gets the unit
    CHECK(gx.data[9] == 0.0f);
    CHECK(gx.data[10] == 1.0f);  // first 2 in the all-tied bottom-right window
    double total = 0;
    for (std::ptrdiff_t i = 0; i < gx.numel(); ++i) total += gx.data[i];
    CHECK(total == doctest::Approx(4.0));
}

TEST_CASE("global average pool averages and spreads gradient uniformly") {
    Rng rng(9);
    Tensor<float> x = oracle::random_tensor<float>(rng, {2, 3, 3, 4});
    Tensor<float> y = global_avg_pool_forward(x);
    REQUIRE(y.shape == std::vector<int>{2, 4});
    double manual = 0;
    for (int i = 0; i < 9; ++i) manual += x.data[static_cast<std::ptrdiff_t>(i) * 4];
    CHECK(y.data[0] == doctest::Approx(manual / 9).epsilon(1e-6));

    Tensor<float> g = oracle::random_tensor<float>(rng, {2, 4});
    Tensor<float> gx = global_avg_pool_backward(x, g);
    REQUIRE(gx.shape == x.shape);
    CHECK(gx.data[0] == doctest::Approx(g.data[0] / 9.0f));
    CHECK(gx.data[4] == doctest::Approx(g.data[0] / 9.0f));
}

TEST_CASE("softmax cross entropy hits ln 2 on even logits and survives huge ones") {
    Tensor<float> z({1, 2});
    LossResult<float> r = softmax_cross_entropy(z, {0});
    CHECK(r.loss == doctest::Approx(0.6931471805599453).epsilon(1e-7));
    CHECK(r.grad.data[0] == doctest::Approx(-0.5).epsilon(1e-6));  // softmax 0.5 minus one-hot
    CHECK(r.grad.data[1] == doctest::Approx(0.5).epsilon(1e-6));

    Tensor<float> big({1, 2});
    big.data << 30.0f, -30.0f;
    LossResult<float> easy = softmax_cross_entropy(big, {0});
    CHECK(std::isfinite(easy.loss));
    CHECK(easy.loss < 1e-6);
    LossResult<float> hard = softmax_cross_entropy(big, {1});
    CHECK(std::isfinite(hard.loss));
    CHECK(hard.loss == doctest::Approx(60.0).epsilon(1e-4));

    Tensor<float> sm = softmax_forward(big);
    CHECK(sm.data[0] == doctest::Approx(1.0));
    CHECK(sm.data[0] + sm.data[1] == doctest::Approx(1.0));
}

TEST_CASE("cross-entropy gradient is the softmax minus one-hot over batch") {
    Rng rng(21);
    Tensor<double> z = oracle::random_tensor<double>(rng, {3, 2}, -2, 2);
    const std::vector<int> labels{0, 1, 0};
    LossResult<double> r = softmax_cross_entropy(z, labels);
    Tensor<double> sm = softmax_forward(z);
    for (int n = 0; n < 3; ++n)
        for (int c = 0; c < 2; ++c) {
            const double expect = (sm.data[n * 2 + c] - (labels[n] == c ? 1.0 : 0.0)) / 3.0;
            CHECK(r.grad.data[n * 2 + c] == doctest::Approx(expect).epsilon(1e-9));
        }

    // finite differences on the logits
    FdOutcome out;
    auto loss = [&]() { return softmax_cross_entropy(z, labels).loss; };
    auto sig = [&]() { return std::vector<std::int8_t>{}; };
    for (std::ptrdiff_t i = 0; i < z.numel(); ++i)
        oracle::fd_check_slot(z.data[i], r.grad.data[i], loss, sig, {}, 1e-4, 1e-5, out);
    CHECK(out.max_rel_err < 1e-5);
    CHECK(out.checked == 6);
}

TEST_CASE("batches evaluate row for row like separate passes") {
    Rng rng(31);
    Tensor<float> xy = oracle::random_tensor<float>(rng, {2, 6, 6, 3});
    Tensor<float> w = oracle::random_tensor<float>(rng, {3, 3, 3, 4});
    Tensor<float> b = oracle::random_tensor<float>(rng, {4});
    Tensor<float> x({1, 6, 6, 3}), y({1, 6, 6, 3});
    for (std::ptrdiff_t i = 0; i < x.numel(); ++i) {
        x.data[i] = xy.data[i];
        y.data[i] = xy.data[x.numel() + i];
    }
    Tensor<float> both = conv2d_forward(xy, w, b, 1, Pad::Same);
    Tensor<float> fx = conv2d_forward(x, w, b, 1, Pad::Same);
    Tensor<float> fy = conv2d_forward(y, w, b, 1, Pad::Same);
    double worst = 0;
    for (std::ptrdiff_t i = 0; i < fx.numel(); ++i) {
        worst = std::max(worst, std::abs(double(both.data[i]) - double(fx.data[i])));
        worst = std::max(worst, std::abs(double(both.data[fx.numel() + i]) - double(fy.data[i])));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("ops reject malformed shapes") {
    Tensor<float> x({1, 4, 4, 3});
    Tensor<float> w({3, 3, 2, 4});  // wrong input channels
    Tensor<float> b({4});
    CHECK_THROWS_AS(conv2d_forward(x, w, b, 1, Pad::Valid), Error);

    Tensor<float> wk({5, 5, 3, 4});  // kernel larger than input, valid padding
    Tensor<float> b4({4});
    CHECK_THROWS_AS(conv2d_forward(x, wk, b4, 1, Pad::Valid), Error);

    Tensor<float> dw({3, 3, 4});
    Tensor<float> db({4});
    CHECK_THROWS_AS(depthwise_forward(x, dw, db, 1, Pad::Same), Error);

    Tensor<float> wd({10, 2});
    Tensor<float> bd({2});
    CHECK_THROWS_AS(dense_forward(x, wd, bd), Error);

    CHECK_THROWS_AS(softmax_cross_entropy(Tensor<float>({2, 2}), std::vector<int>{0}), Error);
}

TEST_CASE("finite differences per layer kind") {
    const int seeds = 5;
    run_layer_fd({LayerKind::Conv2D, "conv_v", 3, 1, Pad::Valid, 3, 4, 0}, {1, 6, 6, 3}, seeds);
    run_layer_fd({LayerKind::Conv2D, "conv_s2", 3, 2, Pad::Same, 3, 4, 0}, {1, 5, 5, 3}, seeds);
    run_layer_fd({LayerKind::DepthwiseConv2D, "dw", 3, 1, Pad::Same, 4, 4, 0}, {1, 5, 5, 4}, seeds);
    run_layer_fd({LayerKind::DepthwiseConv2D, "dw_s2", 3, 2, Pad::Valid, 3, 3, 0}, {1, 6, 6, 3},
                 seeds);
    run_layer_fd({LayerKind::PointwiseConv2D, "pw", 1, 1, Pad::Valid, 4, 6, 0}, {1, 4, 4, 4}, seeds);
    run_layer_fd({LayerKind::Dense, "fc", 0, 1, Pad::Valid, 24, 5, 0}, {1, 2, 2, 6}, seeds);
    run_layer_fd({LayerKind::ReLU, "relu", 0, 1, Pad::Valid, 0, 0, 0}, {2, 3, 3, 4}, seeds);
    run_layer_fd({LayerKind::ReLU6, "relu6_lo", 0, 1, Pad::Valid, 0, 0, 0}, {2, 3, 3, 4}, seeds);
    run_layer_fd({LayerKind::ReLU6, "relu6_hi", 0, 1, Pad::Valid, 0, 0, 0}, {2, 3, 3, 4}, seeds, 4.0,
                 8.0);
    run_layer_fd({LayerKind::MaxPool2D, "pool", 2, 2, Pad::Valid, 0, 0, 0}, {1, 4, 4, 3}, seeds);
    run_layer_fd({LayerKind::GlobalAvgPool, "gap", 0, 1, Pad::Valid, 0, 0, 0}, {2, 3, 3, 5}, seeds);
    run_layer_fd({LayerKind::Softmax, "sm", 0, 1, Pad::Valid, 0, 0, 0}, {3, 4}, seeds);
    run_layer_fd({LayerKind::InvertedResidual, "ir_skip", 3, 1, Pad::Same, 4, 4, 2}, {1, 4, 4, 4},
                 seeds);
    run_layer_fd({LayerKind::InvertedResidual, "ir_s2", 3, 2, Pad::Same, 3, 5, 2}, {1, 5, 5, 3},
                 seeds);
    run_layer_fd({LayerKind::ResidualBottleneck, "rb_id", 3, 1, Pad::Same, 8, 8, 0}, {1, 4, 4, 8},
                 seeds);
    run_layer_fd({LayerKind::ResidualBottleneck, "rb_proj", 3, 2, Pad::Same, 4, 8, 0}, {1, 4, 4, 4},
                 seeds);
}
