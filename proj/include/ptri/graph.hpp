#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptri/nn_ops.hpp"
#include "ptri/rng.hpp"
#include "ptri/tensor.hpp"

namespace ptri {

enum class LayerKind {
    Conv2D,
    DepthwiseConv2D,
    PointwiseConv2D,
    Dense,
    ReLU,
    ReLU6,
    MaxPool2D,
    GlobalAvgPool,
    InvertedResidual,
    ResidualBottleneck,
    Softmax,
};

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    std::string name;
    int kernel = 0;
    int stride = 1;
    Pad padding = Pad::Valid;
    int in_channels = 0;
    int out_channels = 0;
    // InvertedResidual channel multiplier t; unused elsewhere.
    int expansion = 0;

    // ResidualBottleneck reduces to a quarter of its output width.
    int bottleneck_width() const { return out_channels / 4; }
    bool has_projection() const { return stride != 1 || in_channels != out_channels; }
    bool has_residual_skip() const { return stride == 1 && in_channels == out_channels; }
};

struct SgdConfig {
    double learning_rate = 0.01;
    double momentum = 0.0;
    int batch_size = 32;
    int epochs = 10;
    std::uint64_t seed = 0;
};

template <typename S>
using ParamGrads = std::vector<std::vector<Tensor<S>>>;

// Parameter tensor shapes for one layer, in storage order.
inline std::vector<std::vector<int>> layer_param_shapes(const LayerSpec& spec) {
    switch (spec.kind) {
        case LayerKind::Conv2D:
            return {{spec.kernel, spec.kernel, spec.in_channels, spec.out_channels},
                    {spec.out_channels}};
        case LayerKind::PointwiseConv2D:
            return {{1, 1, spec.in_channels, spec.out_channels}, {spec.out_channels}};
        case LayerKind::DepthwiseConv2D:
            return {{spec.kernel, spec.kernel, spec.in_channels}, {spec.in_channels}};
        case LayerKind::Dense:
            return {{spec.in_channels, spec.out_channels}, {spec.out_channels}};
        case LayerKind::InvertedResidual: {
            const int ce = spec.expansion * spec.in_channels;
            return {{1, 1, spec.in_channels, ce}, {ce}, {3, 3, ce}, {ce},
                    {1, 1, ce, spec.out_channels}, {spec.out_channels}};
        }
        case LayerKind::ResidualBottleneck: {
            const int b = spec.bottleneck_width(), cout = spec.out_channels;
            std::vector<std::vector<int>> shapes = {{1, 1, spec.in_channels, b}, {b}, {3, 3, b, b},
                                                    {b}, {1, 1, b, cout}, {cout}};
            if (spec.has_projection()) {
                shapes.push_back({1, 1, spec.in_channels, cout});
                shapes.push_back({cout});
            }
            return shapes;
        }
        default:
            return {};
    }
}

inline std::vector<std::string> layer_param_names(const LayerSpec& spec) {
    switch (spec.kind) {
        case LayerKind::Conv2D:
        case LayerKind::PointwiseConv2D:
        case LayerKind::DepthwiseConv2D:
        case LayerKind::Dense:
            return {"w", "b"};
        case LayerKind::InvertedResidual:
            return {"expand_w", "expand_b", "dw_w", "dw_b", "project_w", "project_b"};
        case LayerKind::ResidualBottleneck: {
            std::vector<std::string> names = {"reduce_w", "reduce_b", "mid_w",
                                              "mid_b",    "expand_w", "expand_b"};
            if (spec.has_projection()) {
                names.push_back("proj_w");
                names.push_back("proj_b");
            }
            return names;
        }
        default:
            return {};
    }
}

namespace detail {

// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases, one seeded stream.
template <typename S>
std::vector<Tensor<S>> init_layer_params(const LayerSpec& spec, Rng& rng) {
    std::vector<Tensor<S>> params;
    for (const auto& shape : layer_param_shapes(spec)) {
        Tensor<S> t(shape);
        if (shape.size() >= 2) {
            std::ptrdiff_t fan_in = 1, fan_out = 1;
            if (shape.size() == 4) {
                fan_in = static_cast<std::ptrdiff_t>(shape[0]) * shape[1] * shape[2];
                fan_out = static_cast<std::ptrdiff_t>(shape[0]) * shape[1] * shape[3];
            } else if (shape.size() == 3) {
                fan_in = fan_out = static_cast<std::ptrdiff_t>(shape[0]) * shape[1];
            } else {
                fan_in = shape[0];
                fan_out = shape[1];
            }
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (std::ptrdiff_t i = 0; i < t.numel(); ++i)
                t.data[i] = static_cast<S>(rng.uniform(-limit, limit));
        }
        params.push_back(std::move(t));
    }
    return params;
}

template <typename S>
Tensor<S> inverted_residual_forward(const LayerSpec& spec, const std::vector<Tensor<S>>& p,
                                    const Tensor<S>& x) {
    Tensor<S> a1 = relu6_forward(pointwise_forward(x, p[0], p[1]));
    Tensor<S> a2 = relu6_forward(depthwise_forward(a1, p[2], p[3], spec.stride, Pad::Same));
    Tensor<S> out = pointwise_forward(a2, p[4], p[5]);
    if (spec.has_residual_skip()) out.data += x.data;
    return out;
}

template <typename S>
Tensor<S> inverted_residual_backward(const LayerSpec& spec, const std::vector<Tensor<S>>& p,
                                     const Tensor<S>& x, const Tensor<S>& gout,
                                     std::vector<Tensor<S>>& pg) {
    const Tensor<S> z1 = pointwise_forward(x, p[0], p[1]);
    const Tensor<S> a1 = relu6_forward(z1);
    const Tensor<S> z2 = depthwise_forward(a1, p[2], p[3], spec.stride, Pad::Same);
    const Tensor<S> a2 = relu6_forward(z2);

    ConvGrads<S> g_proj = pointwise_backward(a2, p[4], gout);
    const Tensor<S> gz2 = relu6_backward(z2, g_proj.input);
    ConvGrads<S> g_dw = depthwise_backward(a1, p[2], spec.stride, Pad::Same, gz2);
    const Tensor<S> gz1 = relu6_backward(z1, g_dw.input);
    ConvGrads<S> g_exp = pointwise_backward(x, p[0], gz1);

    Tensor<S> gx = std::move(g_exp.input);
    if (spec.has_residual_skip()) gx.data += gout.data;
    pg.clear();
    pg.push_back(std::move(g_exp.weights));
    pg.push_back(std::move(g_exp.bias));
    pg.push_back(std::move(g_dw.weights));
    pg.push_back(std::move(g_dw.bias));
    pg.push_back(std::move(g_proj.weights));
    pg.push_back(std::move(g_proj.bias));
    return gx;
}

template <typename S>
Tensor<S> residual_bottleneck_forward(const LayerSpec& spec, const std::vector<Tensor<S>>& p,
                                      const Tensor<S>& x) {
    Tensor<S> a1 = relu_forward(pointwise_forward(x, p[0], p[1]));
    Tensor<S> a2 = relu_forward(conv2d_forward(a1, p[2], p[3], spec.stride, Pad::Same));
    Tensor<S> out = pointwise_forward(a2, p[4], p[5]);
    if (spec.has_projection())
        out.data += conv2d_forward(x, p[6], p[7], spec.stride, Pad::Valid).data;
    else
        out.data += x.data;
    return relu_forward(out);
}

template <typename S>
Tensor<S> residual_bottleneck_backward(const LayerSpec& spec, const std::vector<Tensor<S>>& p,
                                       const Tensor<S>& x, const Tensor<S>& gout,
                                       std::vector<Tensor<S>>& pg) {
    const Tensor<S> z1 = pointwise_forward(x, p[0], p[1]);
    const Tensor<S> a1 = relu_forward(z1);
    const Tensor<S> z2 = conv2d_forward(a1, p[2], p[3], spec.stride, Pad::Same);
    const Tensor<S> a2 = relu_forward(z2);
    Tensor<S> pre = pointwise_forward(a2, p[4], p[5]);
    if (spec.has_projection())
        pre.data += conv2d_forward(x, p[6], p[7], spec.stride, Pad::Valid).data;
    else
        pre.data += x.data;

    const Tensor<S> gpre = relu_backward(pre, gout);
    ConvGrads<S> g3 = pointwise_backward(a2, p[4], gpre);
    const Tensor<S> gz2 = relu_backward(z2, g3.input);
    ConvGrads<S> g2 = conv2d_backward(a1, p[2], spec.stride, Pad::Same, gz2);
    const Tensor<S> gz1 = relu_backward(z1, g2.input);
    ConvGrads<S> g1 = pointwise_backward(x, p[0], gz1);

    Tensor<S> gx = std::move(g1.input);
    pg.clear();
    pg.push_back(std::move(g1.weights));
    pg.push_back(std::move(g1.bias));
    pg.push_back(std::move(g2.weights));
    pg.push_back(std::move(g2.bias));
    pg.push_back(std::move(g3.weights));
    pg.push_back(std::move(g3.bias));
    if (spec.has_projection()) {
        ConvGrads<S> gp = conv2d_backward(x, p[6], spec.stride, Pad::Valid, gpre);
        gx.data += gp.input.data;
        pg.push_back(std::move(gp.weights));
        pg.push_back(std::move(gp.bias));
    } else {
        gx.data += gpre.data;
    }
    return gx;
}

}  // namespace detail

template <typename S>
Tensor<S> forward_layer(const LayerSpec& spec, const std::vector<Tensor<S>>& p, const Tensor<S>& x) {
    switch (spec.kind) {
        case LayerKind::Conv2D: return conv2d_forward(x, p[0], p[1], spec.stride, spec.padding);
        case LayerKind::DepthwiseConv2D:
            return depthwise_forward(x, p[0], p[1], spec.stride, spec.padding);
        case LayerKind::PointwiseConv2D: return pointwise_forward(x, p[0], p[1]);
        case LayerKind::Dense: return dense_forward(x, p[0], p[1]);
        case LayerKind::ReLU: return relu_forward(x);
        case LayerKind::ReLU6: return relu6_forward(x);
        case LayerKind::MaxPool2D: return maxpool_forward(x, spec.kernel, spec.stride);
        case LayerKind::GlobalAvgPool: return global_avg_pool_forward(x);
        case LayerKind::InvertedResidual: return detail::inverted_residual_forward(spec, p, x);
        case LayerKind::ResidualBottleneck: return detail::residual_bottleneck_forward(spec, p, x);
        case LayerKind::Softmax: return softmax_forward(x);
    }
    throw_data("forward_layer: corrupt layer kind");
}

template <typename S>
Tensor<S> backward_layer(const LayerSpec& spec, const std::vector<Tensor<S>>& p, const Tensor<S>& x,
                         const Tensor<S>& gout, std::vector<Tensor<S>>& pg) {
    pg.clear();
    switch (spec.kind) {
        case LayerKind::Conv2D: {
            ConvGrads<S> g = conv2d_backward(x, p[0], spec.stride, spec.padding, gout);
            pg.push_back(std::move(g.weights));
            pg.push_back(std::move(g.bias));
            return std::move(g.input);
        }
        case LayerKind::DepthwiseConv2D: {
            ConvGrads<S> g = depthwise_backward(x, p[0], spec.stride, spec.padding, gout);
            pg.push_back(std::move(g.weights));
            pg.push_back(std::move(g.bias));
            return std::move(g.input);
        }
        case LayerKind::PointwiseConv2D: {
            ConvGrads<S> g = pointwise_backward(x, p[0], gout);
            pg.push_back(std::move(g.weights));
            pg.push_back(std::move(g.bias));
            return std::move(g.input);
        }
        case LayerKind::Dense: {
            ConvGrads<S> g = dense_backward(x, p[0], gout);
            pg.push_back(std::move(g.weights));
            pg.push_back(std::move(g.bias));
            return std::move(g.input);
        }
        case LayerKind::ReLU: return relu_backward(x, gout);
        case LayerKind::ReLU6: return relu6_backward(x, gout);
        case LayerKind::MaxPool2D: return maxpool_backward(x, spec.kernel, spec.stride, gout);
        case LayerKind::GlobalAvgPool: return global_avg_pool_backward(x, gout);
        case LayerKind::InvertedResidual:
            return detail::inverted_residual_backward(spec, p, x, gout, pg);
        case LayerKind::ResidualBottleneck:
            return detail::residual_bottleneck_backward(spec, p, x, gout, pg);
        case LayerKind::Softmax: return softmax_backward(x, gout);
    }
    throw_data("backward_layer: corrupt layer kind");
}

template <typename S>
struct ModelGraphT {
    std::string name;
    int input_size = 0;
    int input_channels = 3;
    int class_count = 2;
    std::vector<LayerSpec> layers;
    ParamGrads<S> params;

    Tensor<S> forward(const Tensor<S>& x) const { return forward_from(0, x); }

    Tensor<S> forward_from(std::size_t first_layer, const Tensor<S>& act) const {
        Tensor<S> cur = act;
        for (std::size_t i = first_layer; i < layers.size(); ++i) {
            cur = forward_layer(layers[i], params[i], cur);
            if (!cur.all_finite())
                throw_numeric("non-finite activations after layer " + layers[i].name);
        }
        return cur;
    }

    // activations[i] is the input to layer i; the final entry is the output.
    std::vector<Tensor<S>> forward_collect(const Tensor<S>& x) const {
        std::vector<Tensor<S>> acts;
        acts.reserve(layers.size() + 1);
        acts.push_back(x);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            acts.push_back(forward_layer(layers[i], params[i], acts.back()));
            if (!acts.back().all_finite())
                throw_numeric("non-finite activations after layer " + layers[i].name);
        }
        return acts;
    }

    S loss_and_gradients(const Tensor<S>& x, const std::vector<int>& labels,
                         ParamGrads<S>& grads) const {
        const std::vector<Tensor<S>> acts = forward_collect(x);
        LossResult<S> loss = softmax_cross_entropy(acts.back(), labels);
        grads.assign(layers.size(), {});
        Tensor<S> g = std::move(loss.grad);
        for (std::size_t i = layers.size(); i-- > 0;) {
            g = backward_layer(layers[i], params[i], acts[i], g, grads[i]);
            for (const Tensor<S>& t : grads[i])
                if (!t.all_finite())
                    throw_numeric("non-finite parameter gradient in layer " + layers[i].name);
            if (!g.all_finite())
                throw_numeric("non-finite input gradient in layer " + layers[i].name);
        }
        return loss.loss;
    }

    std::ptrdiff_t param_count() const {
        std::ptrdiff_t n = 0;
        for (const auto& lp : params)
            for (const auto& t : lp) n += t.numel();
        return n;
    }

    template <typename T>
    ModelGraphT<T> cast() const {
        ModelGraphT<T> out;
        out.name = name;
        out.input_size = input_size;
        out.input_channels = input_channels;
        out.class_count = class_count;
        out.layers = layers;
        out.params.reserve(params.size());
        for (const auto& lp : params) {
            std::vector<Tensor<T>> cp;
            cp.reserve(lp.size());
            for (const auto& t : lp) cp.push_back(t.template cast<T>());
            out.params.push_back(std::move(cp));
        }
        return out;
    }
};

using ModelGraph = ModelGraphT<float>;

template <typename S>
ParamGrads<S> make_zero_grads(const ModelGraphT<S>& model) {
    ParamGrads<S> grads;
    grads.reserve(model.params.size());
    for (const auto& lp : model.params) {
        std::vector<Tensor<S>> layer;
        layer.reserve(lp.size());
        for (const auto& t : lp) layer.push_back(Tensor<S>(t.shape));
        grads.push_back(std::move(layer));
    }
    return grads;
}

template <typename S>
void accumulate_grads(ParamGrads<S>& into, const ParamGrads<S>& from) {
    for (std::size_t i = 0; i < into.size(); ++i)
        for (std::size_t j = 0; j < into[i].size(); ++j) into[i][j].data += from[i][j].data;
}

// Plain SGD with optional momentum; velocity must outlive the run when used.
template <typename S>
void sgd_step(ModelGraphT<S>& model, const ParamGrads<S>& grads, const SgdConfig& config,
              ParamGrads<S>* velocity = nullptr) {
    if (config.learning_rate <= 0) throw_data("sgd: learning rate must be positive");
    const S lr = static_cast<S>(config.learning_rate);
    const S mu = static_cast<S>(config.momentum);
    for (std::size_t i = 0; i < model.params.size(); ++i)
        for (std::size_t j = 0; j < model.params[i].size(); ++j) {
            Tensor<S>& w = model.params[i][j];
            const Tensor<S>& g = grads[i][j];
            if (w.shape != g.shape) throw_data("sgd: gradient shape mismatch");
            if (mu != S(0) && velocity) {
                Tensor<S>& v = (*velocity)[i][j];
                v.data = mu * v.data + g.data;
                w.data -= lr * v.data;
            } else {
                w.data -= lr * g.data;
            }
            if (!w.all_finite())
                throw_numeric("non-finite parameter update in layer " + model.layers[i].name);
        }
}

}  // namespace ptri
