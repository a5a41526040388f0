#ifndef ACNET_FUSION_HPP
#define ACNET_FUSION_HPP

#include <cmath>

#include "acnet/model.hpp"

namespace acnet {

/// Folds eval-mode batch normalization into conv weights and a per-filter
/// bias: kernel' = (gamma/sigma) * kernel, bias' = beta - mu*gamma/sigma,
/// with sigma = sqrt(running_var + eps). For all x,
/// conv(x, fused) == bn_eval(conv(x, original)).
template <typename T>
FilterBank<T> bn_fuse(const FilterBank<T>& bank, const BatchNorm<T>& bn) {
    if (bank.d != bn.channels())
        fail_invalid("bn_fuse: filter count " + std::to_string(bank.d) + " != BN channels " +
                     std::to_string(bn.channels()));
    FilterBank<T> out(bank.d, bank.c, bank.h, bank.w, /*with_bias=*/true);
    const size_t per_filter = static_cast<size_t>(bank.c) * bank.h * bank.w;
    for (int j = 0; j < bank.d; ++j) {
        const T var_eps = bn.running_var[j] + bn.eps;
        if (!(var_eps > T(0)))
            fail_invalid("bn_fuse: non-positive running_var + eps at channel " + std::to_string(j) +
                         " (degenerate statistics)");
        const T sigma = std::sqrt(var_eps);
        const T scale = bn.gamma.value[j] / sigma;
        const T* src = bank.weights.data() + j * per_filter;
        T* dst = out.weights.data() + j * per_filter;
        for (size_t i = 0; i < per_filter; ++i) dst[i] = scale * src[i];
        const T prior_bias = bank.has_bias() ? bank.bias[j] : T(0);
        out.bias[j] = (prior_bias - bn.running_mean[j]) * scale + bn.beta.value[j];
    }
    return out;
}

template <typename T>
FilterBank<T> bn_fuse(const ConvBnLayer<T>& branch) {
    return bn_fuse(branch.conv.bank(), branch.bn);
}

/// Kernel positions the asymmetric branches fuse onto: the 1x3 bank lands
/// on row `horizontal_row`, the 3x1 bank on column `vertical_col`.
struct EmbedOffsets {
    int horizontal_row = 1;
    int vertical_col = 1;
};

/// Merges BN-fused branch banks into one square bank: asymmetric kernels
/// are embedded at their offsets and added onto the square kernel, biases
/// are summed. Null branch pointers (ablated branches) contribute nothing.
template <typename T>
FilterBank<T> branch_fuse(const FilterBank<T>& square,
                          const std::type_identity_t<FilterBank<T>>* horizontal,
                          const std::type_identity_t<FilterBank<T>>* vertical,
                          const EmbedOffsets& off = {}) {
    auto check = [&](const FilterBank<T>* b, const char* name, int kh, int kw) {
        if (!b) return;
        if (b->d != square.d || b->c != square.c)
            fail_invalid(std::string("branch_fuse: ") + name + " bank shape mismatch");
        if (b->h != kh || b->w != kw)
            fail_invalid(std::string("branch_fuse: ") + name + " bank must be " +
                         std::to_string(kh) + "x" + std::to_string(kw));
    };
    check(horizontal, "horizontal", 1, square.w);
    check(vertical, "vertical", square.h, 1);
    if (off.horizontal_row < 0 || off.horizontal_row >= square.h || off.vertical_col < 0 ||
        off.vertical_col >= square.w)
        fail_invalid("branch_fuse: embed offset outside the square kernel");

    FilterBank<T> out(square.d, square.c, square.h, square.w, /*with_bias=*/true);
    out.weights = square.weights;
    for (int j = 0; j < square.d; ++j)
        out.bias[j] = square.has_bias() ? square.bias[j] : T(0);

    for (int j = 0; j < square.d; ++j) {
        for (int ic = 0; ic < square.c; ++ic) {
            if (horizontal)
                for (int q = 0; q < square.w; ++q)
                    out.at(j, ic, off.horizontal_row, q) += horizontal->at(j, ic, 0, q);
            if (vertical)
                for (int r = 0; r < square.h; ++r)
                    out.at(j, ic, r, off.vertical_col) += vertical->at(j, ic, r, 0);
        }
        if (horizontal && horizontal->has_bias()) out.bias[j] += horizontal->bias[j];
        if (vertical && vertical->has_bias()) out.bias[j] += vertical->bias[j];
    }
    return out;
}

namespace detail {

template <typename T>
FilterBank<T> fuse_acb(const ACBlockLayer<T>& block) {
    const EmbedOffsets off{block.h_row_off, block.v_col_off};
    if (block.bn_in_branch) {
        FilterBank<T> sq = bn_fuse(*block.square_bn);
        std::optional<FilterBank<T>> hb, vb;
        if (block.horizontal_bn) hb = bn_fuse(*block.horizontal_bn);
        if (block.vertical_bn) vb = bn_fuse(*block.vertical_bn);
        return branch_fuse(sq, hb ? &*hb : nullptr, vb ? &*vb : nullptr, off);
    }
    // post-summation BN: sum the raw kernels first, then fold the single BN
    FilterBank<T> sq = block.square_conv->bank();
    std::optional<FilterBank<T>> hb, vb;
    if (block.horizontal_conv) hb = block.horizontal_conv->bank();
    if (block.vertical_conv) vb = block.vertical_conv->bank();
    FilterBank<T> summed = branch_fuse(sq, hb ? &*hb : nullptr, vb ? &*vb : nullptr, off);
    return bn_fuse(summed, *block.post_bn);
}

}  // namespace detail

/// Converts a trained (or freshly initialized) network into the original
/// plain architecture: every ACB and every conv-BN pair becomes a single
/// biased convolution with identical eval-mode outputs. Rejects a model
/// that is already plain rather than double-applying.
template <typename T>
Model<T> fuse_model(const Model<T>& src) {
    bool fusable = false;
    for (const auto& layer : src.layers) {
        const std::string k = layer->kind();
        if (k == "convbn" || k == "acb") fusable = true;
    }
    if (src.fused || !fusable)
        fail_invalid("fuse_model: model is already plain (nothing to fuse)");

    Model<T> out;
    out.spec = src.spec;
    out.ablation = src.ablation;
    out.fused = true;
    for (auto& ld : out.spec.layers) {
        if (ld.kind == LayerDesc::Kind::conv) {
            ld.conv.block = BlockKind::plain;
            ld.conv.with_bias = true;
        }
    }

    for (const auto& layer : src.layers) {
        const std::string k = layer->kind();
        if (k == "convbn") {
            const auto& l = static_cast<const ConvBnLayer<T>&>(*layer);
            auto conv = std::make_unique<Conv2dLayer<T>>(l.conv.d, l.conv.c, l.conv.kh, l.conv.kw,
                                                         l.conv.geom, true);
            conv->set_bank(bn_fuse(l));
            out.layers.push_back(std::move(conv));
        } else if (k == "acb") {
            const auto& l = static_cast<const ACBlockLayer<T>&>(*layer);
            auto conv = std::make_unique<Conv2dLayer<T>>(l.d, l.c, 3, 3,
                                                         ConvGeometry(l.stride, l.stride, 1, 1), true);
            conv->set_bank(detail::fuse_acb(l));
            out.layers.push_back(std::move(conv));
        } else {
            out.layers.push_back(layer->clone());
        }
    }
    return out;
}

template <typename T>
constexpr double default_equivalence_tolerance() {
    return std::is_same_v<T, float> ? 1e-4 : 1e-9;
}

struct EquivalenceReport {
    double max_abs = 0.0;
    double max_rel = 0.0;
    double tolerance = 0.0;
    int inputs = 0;
    bool pass = false;
};

/// Evaluates both models on random eval-mode inputs (plus the same inputs
/// scaled by 1e3 and 1e-3) and reports the worst absolute and relative
/// logit deviation. The relative deviation is measured against each
/// sample's largest logit magnitude with a 1e-6 floor.
template <typename T>
EquivalenceReport verify_equivalence(Model<T>& a, Model<T>& b, int n_inputs, std::uint64_t seed,
                                     double tolerance = default_equivalence_tolerance<T>()) {
    if (a.spec.in_c != b.spec.in_c || a.spec.in_h != b.spec.in_h || a.spec.in_w != b.spec.in_w)
        fail_invalid("verify_equivalence: input dims differ");
    EquivalenceReport rep;
    rep.tolerance = tolerance;
    Rng rng(seed ^ 0xec01u);
    const int batch = 16;
    int remaining = n_inputs;
    bool first_batch = true;
    while (remaining > 0) {
        const int bn = std::min(batch, remaining);
        remaining -= bn;
        Tensor<T> x(bn, a.spec.in_c, a.spec.in_h, a.spec.in_w);
        for (auto& v : x.data) v = static_cast<T>(rng.normal());
        std::vector<double> scales{1.0};
        if (first_batch) {
            scales.push_back(1e3);
            scales.push_back(1e-3);
            first_batch = false;
        }
        for (double s : scales) {
            Tensor<T> xs = x;
            if (s != 1.0)
                for (auto& v : xs.data) v = static_cast<T>(v * s);
            Tensor<T> la = a.forward(xs, RunMode::eval);
            Tensor<T> lb = b.forward(xs, RunMode::eval);
            if (!la.same_dims(lb)) fail_invalid("verify_equivalence: output dims differ");
            for (int in = 0; in < la.n; ++in) {
                double denom = 1e-6, abs_dev = 0.0;
                for (int kc = 0; kc < la.c; ++kc)
                    for (int y = 0; y < la.h; ++y)
                        for (int q = 0; q < la.w; ++q) {
                            const double va = la.at(in, kc, y, q);
                            const double vb = lb.at(in, kc, y, q);
                            denom = std::max({denom, std::abs(va), std::abs(vb)});
                            abs_dev = std::max(abs_dev, std::abs(va - vb));
                        }
                rep.max_abs = std::max(rep.max_abs, abs_dev);
                rep.max_rel = std::max(rep.max_rel, abs_dev / denom);
                rep.inputs += 1;
            }
        }
    }
    rep.pass = rep.max_rel <= tolerance;
    return rep;
}

struct LayerDeviation {
    int index = 0;
    std::string kind;
    double max_abs = 0.0;
};

/// Per-layer fusion report: feeds the same intermediate activations to the
/// trained and the fused layer and records the worst output deviation.
template <typename T>
std::vector<LayerDeviation> fusion_layer_report(Model<T>& trained, Model<T>& fused, int batch,
                                                std::uint64_t seed) {
    if (trained.layers.size() != fused.layers.size())
        fail_invalid("fusion_layer_report: layer counts differ");
    Rng rng(seed ^ 0xf0517u);
    Tensor<T> x(batch, trained.spec.in_c, trained.spec.in_h, trained.spec.in_w);
    for (auto& v : x.data) v = static_cast<T>(rng.normal());
    std::vector<LayerDeviation> rows;
    for (size_t i = 0; i < trained.layers.size(); ++i) {
        Tensor<T> next = trained.layers[i]->forward(x, RunMode::eval);
        Tensor<T> alt = fused.layers[i]->forward(x, RunMode::eval);
        double dev = 0.0;
        for (size_t j = 0; j < next.data.size(); ++j)
            dev = std::max(dev, std::abs(static_cast<double>(next.data[j]) - alt.data[j]));
        rows.push_back({static_cast<int>(i), trained.layers[i]->kind(), dev});
        x = std::move(next);
    }
    return rows;
}

}  // namespace acnet

#endif
