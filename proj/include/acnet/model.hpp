#ifndef ACNET_MODEL_HPP
#define ACNET_MODEL_HPP

#include <functional>
#include <memory>
#include <string>

#include "acnet/blocks.hpp"
#include "acnet/modelspec.hpp"
#include "acnet/rng.hpp"

namespace acnet {

/// Table 4-style ablation switches for ACB construction.
struct Ablation {
    bool use_horizontal = true;
    bool use_vertical = true;
    bool bn_in_branch = true;
};

struct BuildOptions {
    std::uint64_t seed = 0;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
};

template <typename T>
class Model {
public:
    ModelSpec spec;  // structural description of the model's current form
    Ablation ablation;
    bool fused = false;
    std::vector<std::unique_ptr<Layer<T>>> layers;

    Tensor<T> forward(const Tensor<T>& x, RunMode mode) {
        if (x.c != spec.in_c || x.h != spec.in_h || x.w != spec.in_w)
            fail_invalid("Model::forward: input dims " + x.dims_str() + " do not match spec (" +
                         std::to_string(spec.in_c) + "," + std::to_string(spec.in_h) + "," +
                         std::to_string(spec.in_w) + ")");
        Tensor<T> t = x;
        for (auto& layer : layers) t = layer->forward(t, mode);
        forward_recorded_ = (mode == RunMode::train);
        return t;
    }

    /// Walks the layer chain in reverse from d(loss)/d(logits). Requires a
    /// train-mode forward pass first.
    void backward(const Tensor<T>& dlogits) {
        if (!forward_recorded_)
            fail_runtime("Model::backward: no train-mode forward pass recorded (detached graph)");
        Tensor<T> g = dlogits;
        for (auto it = layers.rbegin(); it != layers.rend(); ++it) g = (*it)->backward(g);
        forward_recorded_ = false;
    }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> out;
        for (auto& layer : layers) layer->collect_params(out);
        return out;
    }

    void zero_grads() {
        for (Param<T>* p : params()) p->zero_grad();
    }

    Model clone() const {
        Model m;
        m.spec = spec;
        m.ablation = ablation;
        m.fused = fused;
        m.layers.reserve(layers.size());
        for (const auto& layer : layers) m.layers.push_back(layer->clone());
        return m;
    }

private:
    bool forward_recorded_ = false;
};

namespace detail {

template <typename T>
void init_conv_weights(Param<T>& weight, int fan_in, Rng& rng) {
    // zero-mean uniform with variance 2/fan_in
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : weight.value) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace detail

/// Builds a trainable model from a spec, replacing every acb-marked conv
/// with an ACB per the ablation flags. A spec with only plain convs yields
/// the plain conv-BN build. Weight draws follow a fixed layer order so a
/// seed pins the full initialization.
template <typename T>
Model<T> expand_to_acnet(const ModelSpec& spec, const Ablation& ablation,
                         const BuildOptions& opts = {}) {
    validate_model_spec(spec);
    Rng rng(opts.seed ^ 0x5eedf00dull);
    Model<T> model;
    model.spec = spec;
    model.ablation = ablation;
    const T eps = static_cast<T>(opts.bn_eps);
    const T mom = static_cast<T>(opts.bn_momentum);

    int c = spec.in_c, h = spec.in_h, w = spec.in_w;
    for (size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerDesc& ld = spec.layers[li];
        switch (ld.kind) {
            case LayerDesc::Kind::conv: {
                const ConvDesc& cd = ld.conv;
                if (cd.block != BlockKind::plain) {
                    auto block = std::make_unique<ACBlockLayer<T>>(
                        cd.d, c, cd.stride, ablation.use_horizontal, ablation.use_vertical,
                        ablation.bn_in_branch, cd.block == BlockKind::acb_shifted, eps, mom);
                    auto init_branch = [&](Conv2dLayer<T>& conv) {
                        detail::init_conv_weights(conv.weight, c * conv.kh * conv.kw, rng);
                    };
                    if (block->bn_in_branch) {
                        init_branch(block->square_bn->conv);
                        if (block->horizontal_bn) init_branch(block->horizontal_bn->conv);
                        if (block->vertical_bn) init_branch(block->vertical_bn->conv);
                    } else {
                        init_branch(*block->square_conv);
                        if (block->horizontal_conv) init_branch(*block->horizontal_conv);
                        if (block->vertical_conv) init_branch(*block->vertical_conv);
                    }
                    model.layers.push_back(std::move(block));
                } else if (cd.with_bias) {
                    // fused-form conv (bias, no BN); weights start at zero
                    auto conv = std::make_unique<Conv2dLayer<T>>(
                        cd.d, c, cd.kh, cd.kw, ConvGeometry(cd.stride, cd.stride, cd.pad, cd.pad),
                        true);
                    detail::init_conv_weights(conv->weight, c * cd.kh * cd.kw, rng);
                    model.layers.push_back(std::move(conv));
                } else {
                    auto layer = std::make_unique<ConvBnLayer<T>>(
                        cd.d, c, cd.kh, cd.kw, ConvGeometry(cd.stride, cd.stride, cd.pad, cd.pad),
                        eps, mom);
                    detail::init_conv_weights(layer->conv.weight, c * cd.kh * cd.kw, rng);
                    model.layers.push_back(std::move(layer));
                }
                c = cd.d;
                h = ConvGeometry::out_extent(h, cd.kh, cd.stride, cd.pad);
                w = ConvGeometry::out_extent(w, cd.kw, cd.stride, cd.pad);
                break;
            }
            case LayerDesc::Kind::relu:
                model.layers.push_back(std::make_unique<ReluLayer<T>>());
                break;
            case LayerDesc::Kind::maxpool:
                model.layers.push_back(std::make_unique<MaxPoolLayer<T>>(ld.pool_k, ld.pool_stride));
                h = (h - ld.pool_k) / ld.pool_stride + 1;
                w = (w - ld.pool_k) / ld.pool_stride + 1;
                break;
            case LayerDesc::Kind::gap:
                model.layers.push_back(std::make_unique<GlobalAvgPoolLayer<T>>());
                h = 1;
                w = 1;
                break;
            case LayerDesc::Kind::linear: {
                auto lin = std::make_unique<LinearLayer<T>>(ld.classes, c * h * w);
                detail::init_conv_weights(lin->weight, c * h * w, rng);
                model.layers.push_back(std::move(lin));
                c = ld.classes;
                h = 1;
                w = 1;
                break;
            }
        }
    }
    return model;
}

template <typename T>
Tensor<T> model_forward(Model<T>& model, const Tensor<T>& x, RunMode mode) {
    return model.forward(x, mode);
}

/// Visits every value array of a layer (weights, biases, BN affine and
/// running statistics) in the fixed declared order used by serialization
/// and precision conversion.
template <typename T, typename Fn>
void for_each_array(Layer<T>& layer, Fn&& fn) {
    const std::string k = layer.kind();
    if (k == "conv") {
        auto& l = static_cast<Conv2dLayer<T>&>(layer);
        fn("weight", l.weight.value);
        if (l.bias) fn("bias", l.bias->value);
    } else if (k == "bn") {
        auto& l = static_cast<BatchNorm<T>&>(layer);
        fn("gamma", l.gamma.value);
        fn("beta", l.beta.value);
        fn("running_mean", l.running_mean);
        fn("running_var", l.running_var);
    } else if (k == "convbn") {
        auto& l = static_cast<ConvBnLayer<T>&>(layer);
        for_each_array(l.conv, fn);
        for_each_array(l.bn, fn);
    } else if (k == "acb") {
        auto& l = static_cast<ACBlockLayer<T>&>(layer);
        if (l.bn_in_branch) {
            for_each_array(*l.square_bn, fn);
            if (l.horizontal_bn) for_each_array(*l.horizontal_bn, fn);
            if (l.vertical_bn) for_each_array(*l.vertical_bn, fn);
        } else {
            for_each_array(*l.square_conv, fn);
            if (l.horizontal_conv) for_each_array(*l.horizontal_conv, fn);
            if (l.vertical_conv) for_each_array(*l.vertical_conv, fn);
            for_each_array(*l.post_bn, fn);
        }
    } else if (k == "linear") {
        auto& l = static_cast<LinearLayer<T>&>(layer);
        fn("weight", l.weight.value);
        fn("bias", l.bias.value);
    }
}

template <typename T, typename Fn>
void for_each_array(Model<T>& model, Fn&& fn) {
    for (auto& layer : model.layers) for_each_array(*layer, fn);
}

/// Rebuilds the model at a different floating-point precision; values are
/// converted element-wise (widening float -> double is exact).
template <typename To, typename From>
Model<To> convert_model(const Model<From>& src) {
    Model<To> dst = expand_to_acnet<To>(src.spec, src.ablation);
    dst.fused = src.fused;
    std::vector<const std::vector<From>*> arrays;
    for_each_array(const_cast<Model<From>&>(src),
                   [&](const char*, std::vector<From>& v) { arrays.push_back(&v); });
    size_t idx = 0;
    for_each_array(dst, [&](const char*, std::vector<To>& v) {
        const auto& s = *arrays[idx++];
        if (s.size() != v.size()) fail_runtime("convert_model: array size mismatch");
        for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<To>(s[i]);
    });
    if (idx != arrays.size()) fail_runtime("convert_model: array walk mismatch");
    return dst;
}

template <typename T>
size_t trainable_param_count(Model<T>& model) {
    size_t n = 0;
    for (Param<T>* p : model.params()) n += p->value.size();
    return n;
}

template <typename T>
int bn_state_count(Model<T>& model) {
    int n = 0;
    for (auto& layer : model.layers) {
        const std::string k = layer->kind();
        if (k == "convbn") {
            ++n;
        } else if (k == "acb") {
            auto& l = static_cast<ACBlockLayer<T>&>(*layer);
            if (l.bn_in_branch)
                n += 1 + (l.horizontal_bn ? 1 : 0) + (l.vertical_bn ? 1 : 0);
            else
                n += 1;
        }
    }
    return n;
}

}  // namespace acnet

#endif
