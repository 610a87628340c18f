#include "ptri/zoo.hpp"

#include <array>

#include "ptri/error.hpp"

namespace ptri {

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2D: return "conv2d";
        case LayerKind::DepthwiseConv2D: return "depthwise_conv2d";
        case LayerKind::PointwiseConv2D: return "pointwise_conv2d";
        case LayerKind::Dense: return "dense";
        case LayerKind::ReLU: return "relu";
        case LayerKind::ReLU6: return "relu6";
        case LayerKind::MaxPool2D: return "maxpool2d";
        case LayerKind::GlobalAvgPool: return "global_avg_pool";
        case LayerKind::InvertedResidual: return "inverted_residual";
        case LayerKind::ResidualBottleneck: return "residual_bottleneck";
        case LayerKind::Softmax: return "softmax";
    }
    throw_data("corrupt layer kind");
}

LayerKind layer_kind_from_string(const std::string& s) {
    static const std::array<LayerKind, 11> kinds = {
        LayerKind::Conv2D,        LayerKind::DepthwiseConv2D,  LayerKind::PointwiseConv2D,
        LayerKind::Dense,         LayerKind::ReLU,             LayerKind::ReLU6,
        LayerKind::MaxPool2D,     LayerKind::GlobalAvgPool,    LayerKind::InvertedResidual,
        LayerKind::ResidualBottleneck, LayerKind::Softmax};
    for (LayerKind k : kinds)
        if (s == to_string(k)) return k;
    throw_data("unknown layer kind: " + s);
}

const char* to_string(ArchitectureId arch) {
    switch (arch) {
        case ArchitectureId::MobileMini: return "mobile";
        case ArchitectureId::VggMini: return "vgg";
        case ArchitectureId::Res50Mini: return "res50";
        case ArchitectureId::Res101Mini: return "res101";
    }
    throw_data("corrupt architecture id");
}

ArchitectureId architecture_from_string(const std::string& s) {
    if (s == "mobile") return ArchitectureId::MobileMini;
    if (s == "vgg") return ArchitectureId::VggMini;
    if (s == "res50") return ArchitectureId::Res50Mini;
    if (s == "res101") return ArchitectureId::Res101Mini;
    throw_data("unknown architecture: " + s + " (expected mobile|vgg|res50|res101)");
}

namespace {

LayerSpec conv(std::string name, int k, int stride, Pad pad, int cin, int cout) {
    LayerSpec s;
    s.kind = LayerKind::Conv2D;
    s.name = std::move(name);
    s.kernel = k;
    s.stride = stride;
    s.padding = pad;
    s.in_channels = cin;
    s.out_channels = cout;
    return s;
}

LayerSpec act(std::string name, LayerKind kind) {
    LayerSpec s;
    s.kind = kind;
    s.name = std::move(name);
    return s;
}

LayerSpec maxpool(std::string name, int k, int stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool2D;
    s.name = std::move(name);
    s.kernel = k;
    s.stride = stride;
    return s;
}

LayerSpec inverted_residual(std::string name, int cin, int cout, int expansion, int stride) {
    LayerSpec s;
    s.kind = LayerKind::InvertedResidual;
    s.name = std::move(name);
    s.kernel = 3;
    s.stride = stride;
    s.padding = Pad::Same;
    s.in_channels = cin;
    s.out_channels = cout;
    s.expansion = expansion;
    return s;
}

LayerSpec bottleneck(std::string name, int cin, int cout, int stride) {
    LayerSpec s;
    s.kind = LayerKind::ResidualBottleneck;
    s.name = std::move(name);
    s.kernel = 3;
    s.stride = stride;
    s.padding = Pad::Same;
    s.in_channels = cin;
    s.out_channels = cout;
    return s;
}

LayerSpec dense(std::string name, int in, int out) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.name = std::move(name);
    s.in_channels = in;
    s.out_channels = out;
    return s;
}

std::vector<LayerSpec> mobile_mini_layers(int input_size) {
    (void)input_size;
    std::vector<LayerSpec> layers;
    layers.push_back(conv("stem", 3, 2, Pad::Same, 3, 16));
    layers.push_back(act("stem_act", LayerKind::ReLU6));
    layers.push_back(inverted_residual("ir1", 16, 24, 6, 2));
    layers.push_back(inverted_residual("ir2", 24, 24, 6, 1));
    layers.push_back(inverted_residual("ir3", 24, 32, 6, 2));
    layers.push_back(inverted_residual("ir4", 32, 32, 6, 1));
    layers.push_back(act("gap", LayerKind::GlobalAvgPool));
    layers.push_back(dense("fc", 32, 2));
    return layers;
}

std::vector<LayerSpec> vgg_mini_layers(int input_size) {
    constexpr int widths[4] = {32, 64, 128, 256};
    std::vector<LayerSpec> layers;
    int cin = 3;
    for (int stage = 0; stage < 4; ++stage) {
        const int cout = widths[stage];
        const std::string tag = std::to_string(stage + 1);
        layers.push_back(conv("conv" + tag + "_1", 3, 1, Pad::Same, cin, cout));
        layers.push_back(act("act" + tag + "_1", LayerKind::ReLU));
        layers.push_back(conv("conv" + tag + "_2", 3, 1, Pad::Same, cout, cout));
        layers.push_back(act("act" + tag + "_2", LayerKind::ReLU));
        layers.push_back(maxpool("pool" + tag, 2, 2));
        cin = cout;
    }
    const int spatial = input_size / 16;
    layers.push_back(dense("fc", spatial * spatial * 256, 2));
    return layers;
}

std::vector<LayerSpec> res_mini_layers(int input_size, const std::array<int, 4>& blocks) {
    (void)input_size;
    constexpr int base_widths[4] = {8, 16, 32, 64};
    std::vector<LayerSpec> layers;
    layers.push_back(conv("stem", 3, 2, Pad::Same, 3, 16));
    layers.push_back(act("stem_act", LayerKind::ReLU));
    int cin = 16;
    for (int stage = 0; stage < 4; ++stage) {
        const int cout = 4 * base_widths[stage];
        for (int blk = 0; blk < blocks[static_cast<std::size_t>(stage)]; ++blk) {
            const int stride = (blk == 0 && stage > 0) ? 2 : 1;
            const std::string name =
                "stage" + std::to_string(stage + 1) + "_block" + std::to_string(blk + 1);
            layers.push_back(bottleneck(name, cin, cout, stride));
            cin = cout;
        }
    }
    layers.push_back(act("gap", LayerKind::GlobalAvgPool));
    layers.push_back(dense("fc", cin, 2));
    return layers;
}

}  // namespace

ModelGraph build(ArchitectureId arch, int input_size, std::uint64_t seed) {
    if (input_size != 32 && input_size != 64 && input_size != 96)
        throw_data("unsupported input size " + std::to_string(input_size) + " (expected 32, 64, or 96)");

    ModelGraph model;
    model.name = to_string(arch);
    model.input_size = input_size;
    switch (arch) {
        case ArchitectureId::MobileMini: model.layers = mobile_mini_layers(input_size); break;
        case ArchitectureId::VggMini: model.layers = vgg_mini_layers(input_size); break;
        case ArchitectureId::Res50Mini: model.layers = res_mini_layers(input_size, {1, 2, 3, 2}); break;
        case ArchitectureId::Res101Mini: model.layers = res_mini_layers(input_size, {2, 4, 7, 3}); break;
    }

    Rng rng(seed);
    model.params.reserve(model.layers.size());
    for (const LayerSpec& spec : model.layers)
        model.params.push_back(detail::init_layer_params<float>(spec, rng));
    return model;
}

std::ptrdiff_t param_count(const ModelGraph& model) { return model.param_count(); }

long long flops_estimate(const ModelGraph& model, int input_size) {
    long long macs = 0;
    long long h = input_size, w = input_size;
    const auto out_dim = [](long long d, int k, int stride, Pad pad) -> long long {
        const ConvGeom g = conv_geometry(static_cast<int>(d), static_cast<int>(d), k, stride, pad);
        return g.out_h;
    };
    for (const LayerSpec& spec : model.layers) {
        switch (spec.kind) {
            case LayerKind::Conv2D: {
                const long long oh = out_dim(h, spec.kernel, spec.stride, spec.padding);
                macs += oh * oh * spec.kernel * spec.kernel * spec.in_channels * spec.out_channels;
                h = w = oh;
                break;
            }
            case LayerKind::DepthwiseConv2D: {
                const long long oh = out_dim(h, spec.kernel, spec.stride, spec.padding);
                macs += oh * oh * spec.kernel * spec.kernel * spec.in_channels;
                h = w = oh;
                break;
            }
            case LayerKind::PointwiseConv2D:
                macs += h * w * spec.in_channels * spec.out_channels;
                break;
            case LayerKind::Dense:
                macs += static_cast<long long>(spec.in_channels) * spec.out_channels;
                break;
            case LayerKind::MaxPool2D:
                h = w = out_dim(h, spec.kernel, spec.stride, Pad::Valid);
                break;
            case LayerKind::InvertedResidual: {
                const long long ce = static_cast<long long>(spec.expansion) * spec.in_channels;
                const long long oh = out_dim(h, 3, spec.stride, Pad::Same);
                macs += h * w * spec.in_channels * ce;   // expand
                macs += oh * oh * 9 * ce;                // depthwise
                macs += oh * oh * ce * spec.out_channels;  // project
                h = w = oh;
                break;
            }
            case LayerKind::ResidualBottleneck: {
                const long long b = spec.bottleneck_width();
                const long long oh = out_dim(h, 3, spec.stride, Pad::Same);
                macs += h * w * spec.in_channels * b;      // reduce
                macs += oh * oh * 9 * b * b;               // mid 3x3
                macs += oh * oh * b * spec.out_channels;   // expand
                if (spec.has_projection()) macs += oh * oh * spec.in_channels * spec.out_channels;
                h = w = oh;
                break;
            }
            case LayerKind::GlobalAvgPool:
                h = w = 1;
                break;
            case LayerKind::ReLU:
            case LayerKind::ReLU6:
            case LayerKind::Softmax:
                break;
        }
    }
    return macs;
}

}  // namespace ptri
