#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "ptri/checkpoint.hpp"
#include "ptri/error.hpp"
#include "ptri/graph.hpp"
#include "ptri/zoo.hpp"

#include "oracles.hpp"

using namespace ptri;
using oracle::Rng;

namespace {

ModelGraph tiny_dense_model(float weight_fill) {
    ModelGraph m;
    m.name = "tiny";
    m.input_size = 1;
    m.layers = {{LayerKind::Dense, "fc", 0, 1, Pad::Valid, 2, 2, 0}};
    Tensor<float> w({2, 2});
    w.data.setConstant(weight_fill);
    Tensor<float> b({2});
    m.params = {{w, b}};
    return m;
}

ParamGrads<float> constant_grads(const ModelGraph& m, float fill) {
    ParamGrads<float> g = make_zero_grads(m);
    for (auto& lp : g)
        for (auto& t : lp) t.data.setConstant(fill);
    return g;
}

std::vector<char> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("param shapes and names stay aligned for every layer kind") {
    const std::vector<LayerSpec> specs = {
        {LayerKind::Conv2D, "c", 3, 1, Pad::Same, 3, 8, 0},
        {LayerKind::DepthwiseConv2D, "d", 3, 1, Pad::Same, 8, 8, 0},
        {LayerKind::PointwiseConv2D, "p", 1, 1, Pad::Valid, 8, 16, 0},
        {LayerKind::Dense, "f", 0, 1, Pad::Valid, 10, 2, 0},
        {LayerKind::ReLU, "r", 0, 1, Pad::Valid, 0, 0, 0},
        {LayerKind::ReLU6, "r6", 0, 1, Pad::Valid, 0, 0, 0},
        {LayerKind::MaxPool2D, "mp", 2, 2, Pad::Valid, 0, 0, 0},
        {LayerKind::GlobalAvgPool, "g", 0, 1, Pad::Valid, 0, 0, 0},
        {LayerKind::InvertedResidual, "ir", 3, 1, Pad::Same, 8, 8, 4},
        {LayerKind::ResidualBottleneck, "rb1", 3, 1, Pad::Same, 16, 16, 0},
        {LayerKind::ResidualBottleneck, "rb2", 3, 2, Pad::Same, 8, 16, 0},
        {LayerKind::Softmax, "sm", 0, 1, Pad::Valid, 0, 0, 0},
    };
    for (const auto& spec : specs) {
        const auto shapes = layer_param_shapes(spec);
        const auto names = layer_param_names(spec);
        INFO("layer " << spec.name);
        CHECK(shapes.size() == names.size());
        Rng rng(1);
        const auto params = detail::init_layer_params<float>(spec, rng);
        REQUIRE(params.size() == shapes.size());
        for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i].shape == shapes[i]);
    }

    // a 10 -> 2 dense head holds 22 parameters
    LayerSpec fc{LayerKind::Dense, "f", 0, 1, Pad::Valid, 10, 2, 0};
    std::ptrdiff_t n = 0;
    for (const auto& s : layer_param_shapes(fc)) n += Tensor<float>::numel_of(s);
    CHECK(n == 22);
}

TEST_CASE("projection rule: stride or channel change forces a shortcut projection") {
    LayerSpec id{LayerKind::ResidualBottleneck, "a", 3, 1, Pad::Same, 16, 16, 0};
    CHECK_FALSE(id.has_projection());
    CHECK(layer_param_shapes(id).size() == 6);
    LayerSpec wide{LayerKind::ResidualBottleneck, "b", 3, 1, Pad::Same, 8, 16, 0};
    CHECK(wide.has_projection());
    CHECK(layer_param_shapes(wide).size() == 8);
    LayerSpec strided{LayerKind::ResidualBottleneck, "c", 3, 2, Pad::Same, 16, 16, 0};
    CHECK(strided.has_projection());

    LayerSpec ir_skip{LayerKind::InvertedResidual, "d", 3, 1, Pad::Same, 8, 8, 4};
    CHECK(ir_skip.has_residual_skip());
    LayerSpec ir_no{LayerKind::InvertedResidual, "e", 3, 2, Pad::Same, 8, 8, 4};
    CHECK_FALSE(ir_no.has_residual_skip());
}

TEST_CASE("zero inverted-residual weights with stride 1 pass the input through") {
    LayerSpec spec{LayerKind::InvertedResidual, "ir", 3, 1, Pad::Same, 4, 4, 2};
    std::vector<Tensor<float>> p;
    for (const auto& s : layer_param_shapes(spec)) p.emplace_back(s);
    Rng rng(5);
    Tensor<float> x = oracle::random_tensor<float>(rng, {2, 5, 5, 4});
    Tensor<float> y = forward_layer(spec, p, x);
    REQUIRE(y.shape == x.shape);
    for (std::ptrdiff_t i = 0; i < x.numel(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("forward_collect feeds forward_from consistently") {
    ModelGraph model = build(ArchitectureId::MobileMini, 32, 99);
    Rng rng(17);
    Tensor<float> x = oracle::random_tensor<float>(rng, {2, 32, 32, 3}, 0.0, 1.0);
    const auto acts = model.forward_collect(x);
    REQUIRE(acts.size() == model.layers.size() + 1);
    const Tensor<float>& final_out = acts.back();
    CHECK(final_out.shape == std::vector<int>{2, 2});
    for (std::size_t i = 0; i < model.layers.size(); i += 3) {
        Tensor<float> resumed = model.forward_from(i, acts[i]);
        REQUIRE(resumed.shape == final_out.shape);
        for (std::ptrdiff_t j = 0; j < resumed.numel(); ++j)
            CHECK(resumed.data[j] == final_out.data[j]);
    }
}

TEST_CASE("end-to-end gradients agree with finite differences") {
    ModelGraphT<double> model = build(ArchitectureId::MobileMini, 32, 7).cast<double>();
    Rng rng(23);
    Tensor<double> x = oracle::random_tensor<double>(rng, {2, 32, 32, 3}, 0.0, 1.0);
    const std::vector<int> labels{1, 0};
    // 1% of the smallest net's parameters
    const auto n = static_cast<std::size_t>(param_count(build(ArchitectureId::MobileMini, 32, 7)));
    oracle::FdOutcome out = oracle::check_model_gradients(model, x, labels, n / 100, 555);
    INFO("checked " << out.checked << " skipped " << out.skipped);
    CHECK(out.max_rel_err < 1e-3);
    CHECK(out.checked >= 300);
}

TEST_CASE("sgd arithmetic") {
    SgdConfig cfg;
    cfg.learning_rate = 0.01;

    ModelGraph m = tiny_dense_model(1.0f);
    sgd_step(m, constant_grads(m, 0.5f), cfg);
    for (int i = 0; i < 4; ++i)
        CHECK(m.params[0][0].data[i] == doctest::Approx(0.995).epsilon(1e-7));

    SUBCASE("zero gradient leaves weights bit-identical") {
        ModelGraph a = tiny_dense_model(0.37f);
        ModelGraph b = a;
        sgd_step(a, make_zero_grads(a), cfg);
        CHECK(std::memcmp(a.params[0][0].ptr(), b.params[0][0].ptr(), 4 * sizeof(float)) == 0);
    }

    SUBCASE("two small steps match one double step on a constant gradient") {
        ModelGraph two = tiny_dense_model(1.0f);
        sgd_step(two, constant_grads(two, 0.5f), cfg);
        sgd_step(two, constant_grads(two, 0.5f), cfg);
        ModelGraph one = tiny_dense_model(1.0f);
        SgdConfig big = cfg;
        big.learning_rate = 0.02;
        sgd_step(one, constant_grads(one, 0.5f), big);
        for (int i = 0; i < 4; ++i)
            CHECK(two.params[0][0].data[i] ==
                  doctest::Approx(one.params[0][0].data[i]).epsilon(1e-6));
    }

    SUBCASE("momentum accumulates velocity") {
        SgdConfig mom = cfg;
        mom.momentum = 0.9;
        ModelGraph m2 = tiny_dense_model(1.0f);
        ParamGrads<float> vel = make_zero_grads(m2);
        sgd_step(m2, constant_grads(m2, 1.0f), mom, &vel);
        CHECK(m2.params[0][0].data[0] == doctest::Approx(1.0 - 0.01));
        sgd_step(m2, constant_grads(m2, 1.0f), mom, &vel);
        // v2 = 0.9*1 + 1 = 1.9, w = 0.99 - 0.019
        CHECK(m2.params[0][0].data[0] == doctest::Approx(0.99 - 0.019).epsilon(1e-6));
    }

    SUBCASE("non-positive learning rate is rejected") {
        SgdConfig bad = cfg;
        bad.learning_rate = 0.0;
        ModelGraph m3 = tiny_dense_model(1.0f);
        CHECK_THROWS_AS(sgd_step(m3, make_zero_grads(m3), bad), Error);
    }
}

TEST_CASE("non-finite values are caught and named") {
    ModelGraph model = build(ArchitectureId::MobileMini, 32, 3);
    model.params[0][0].data[0] = std::numeric_limits<float>::quiet_NaN();
    Tensor<float> x({1, 32, 32, 3});
    x.data.setConstant(0.5f);
    try {
        model.forward(x);
        FAIL("expected a numeric error");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::Numeric);
        CHECK(std::string(e.what()).find("layer") != std::string::npos);
    }
}

TEST_CASE("checkpoint round-trip is lossless") {
    const auto dir = oracle::fresh_dir("graph_ckpt");
    ModelGraph model = build(ArchitectureId::Res50Mini, 32, 2024);
    const auto path = dir / "model.ckpt";
    save_checkpoint(model, path);
    ModelGraph loaded = load_checkpoint(path);

    CHECK(loaded.name == model.name);
    CHECK(loaded.input_size == model.input_size);
    REQUIRE(loaded.layers.size() == model.layers.size());
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        REQUIRE(loaded.params[i].size() == model.params[i].size());
        for (std::size_t j = 0; j < model.params[i].size(); ++j) {
            REQUIRE(loaded.params[i][j].shape == model.params[i][j].shape);
            CHECK(std::memcmp(loaded.params[i][j].ptr(), model.params[i][j].ptr(),
                              static_cast<std::size_t>(model.params[i][j].numel()) *
                                  sizeof(float)) == 0);
        }
    }

    Rng rng(8);
    Tensor<float> x = oracle::random_tensor<float>(rng, {2, 32, 32, 3}, 0.0, 1.0);
    Tensor<float> a = model.forward(x);
    Tensor<float> b = loaded.forward(x);
    for (std::ptrdiff_t i = 0; i < a.numel(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("checkpoint header counts every stored parameter") {
    const auto dir = oracle::fresh_dir("graph_ckpt_header");
    ModelGraph model = build(ArchitectureId::MobileMini, 32, 5);
    const auto path = dir / "model.ckpt";
    save_checkpoint(model, path);

    const std::vector<char> bytes = slurp(path);
    REQUIRE(bytes.size() > 16);
    CHECK(std::memcmp(bytes.data(), "PTRI", 4) == 0);
    std::uint64_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + 8, 8);
    REQUIRE(16 + header_len < bytes.size());
    const auto header = nlohmann::json::parse(std::string(bytes.data() + 16, header_len));

    std::ptrdiff_t total = 0;
    for (const auto& p : header.at("params")) {
        std::ptrdiff_t n = 1;
        for (int d : p.at("shape").get<std::vector<int>>()) n *= d;
        total += n;
    }
    CHECK(total == header.at("param_count").get<std::ptrdiff_t>());
    CHECK(total == model.param_count());
    // payload after the header is exactly the parameter block
    CHECK(bytes.size() - 16 - header_len == static_cast<std::size_t>(total) * sizeof(float));
}

TEST_CASE("corrupt checkpoints are rejected") {
    const auto dir = oracle::fresh_dir("graph_ckpt_bad");
    ModelGraph model = build(ArchitectureId::MobileMini, 32, 5);
    const auto path = dir / "model.ckpt";
    save_checkpoint(model, path);
    const std::vector<char> good = slurp(path);

    SUBCASE("bad magic") {
        std::vector<char> bad = good;
        bad[0] = 'X';
        spit(dir / "bad_magic.ckpt", bad);
        CHECK_THROWS_AS(load_checkpoint(dir / "bad_magic.ckpt"), Error);
    }
    SUBCASE("unsupported version") {
        std::vector<char> bad = good;
        bad[4] = 99;
        spit(dir / "bad_version.ckpt", bad);
        CHECK_THROWS_AS(load_checkpoint(dir / "bad_version.ckpt"), Error);
    }
    SUBCASE("truncated payload") {
        std::vector<char> bad(good.begin(), good.end() - 257);
        spit(dir / "truncated.ckpt", bad);
        CHECK_THROWS_AS(load_checkpoint(dir / "truncated.ckpt"), Error);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint(dir / "nope.ckpt"), Error);
    }
}

TEST_CASE("concurrent forward passes share one model safely") {
    ModelGraph model = build(ArchitectureId::MobileMini, 32, 77);
    Rng rng(31);
    std::vector<Tensor<float>> inputs;
    for (int i = 0; i < 4; ++i)
        inputs.push_back(oracle::random_tensor<float>(rng, {1, 32, 32, 3}, 0.0, 1.0));
    std::vector<Tensor<float>> expected;
    for (const auto& x : inputs) expected.push_back(model.forward(x));

    std::vector<Tensor<float>> got(4);
    std::vector<std::thread> pool;
    for (int t = 0; t < 4; ++t)
        pool.emplace_back([&, t] { got[static_cast<std::size_t>(t)] = model.forward(inputs[static_cast<std::size_t>(t)]); });
    for (auto& th : pool) th.join();

    for (int t = 0; t < 4; ++t) {
        REQUIRE(got[static_cast<std::size_t>(t)].shape == expected[static_cast<std::size_t>(t)].shape);
        for (std::ptrdiff_t i = 0; i < expected[static_cast<std::size_t>(t)].numel(); ++i)
            CHECK(got[static_cast<std::size_t>(t)].data[i] == expected[static_cast<std::size_t>(t)].data[i]);
    }
}
