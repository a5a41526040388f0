#ifndef ACNET_BLOCKS_HPP
#define ACNET_BLOCKS_HPP

#include <optional>

#include "acnet/layers.hpp"

namespace acnet {

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_dims(b))
        fail_invalid("add_inplace: dims " + a.dims_str() + " vs " + b.dims_str());
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

/// One conv branch: an optional zero-filled input shift (used by the border
/// ACB variant), a bias-free convolution, then batch normalization. Doubles
/// as the trainable form of a plain conv layer.
template <typename T>
class ConvBnLayer final : public Layer<T> {
public:
    Conv2dLayer<T> conv;
    BatchNorm<T> bn;
    int shift_dy = 0, shift_dx = 0;

    ConvBnLayer(int d, int c, int kh, int kw, ConvGeometry g, T bn_eps, T bn_momentum)
        : conv(d, c, kh, kw, g, /*with_bias=*/false), bn(d, bn_eps, bn_momentum) {}

    Tensor<T> forward(const Tensor<T>& x, RunMode mode) override {
        Tensor<T> t = (shift_dy || shift_dx) ? shift2d(x, shift_dy, shift_dx) : x;
        return bn.forward(conv.forward(t, mode), mode);
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> g = conv.backward(bn.backward(dy));
        return (shift_dy || shift_dx) ? shift2d(g, -shift_dy, -shift_dx) : g;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        conv.collect_params(out);
        bn.collect_params(out);
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ConvBnLayer>(*this); }
    const char* kind() const override { return "convbn"; }
};

/// Asymmetric convolution block: parallel square (3x3, pad 1), horizontal
/// (1x3, pad 0,1) and vertical (3x1, pad 1,0) branches over the same input,
/// outputs summed. The padding assignment makes all branches produce the
/// square branch's output dims for any stride. Embed offsets select the
/// kernel row/column the asymmetric branches fuse onto; non-center offsets
/// shift the branch input so the sliding windows stay aligned.
template <typename T>
class ACBlockLayer final : public Layer<T> {
public:
    int d = 0, c = 0, stride = 1;
    bool bn_in_branch = true;
    int h_row_off = 1;  // row of the 3x3 kernel the 1x3 branch lands on
    int v_col_off = 1;  // column the 3x1 branch lands on

    std::optional<ConvBnLayer<T>> square_bn, horizontal_bn, vertical_bn;
    // bn_in_branch == false keeps bare convs and one post-summation BN
    std::optional<Conv2dLayer<T>> square_conv, horizontal_conv, vertical_conv;
    std::optional<BatchNorm<T>> post_bn;

    ACBlockLayer(int d_, int c_, int stride_, bool use_horizontal, bool use_vertical,
                 bool bn_in_branch_, bool shifted, T bn_eps, T bn_momentum)
        : d(d_), c(c_), stride(stride_), bn_in_branch(bn_in_branch_) {
        if (shifted) {
            h_row_off = 2;
            v_col_off = 2;
        }
        const ConvGeometry sq_g(stride_, stride_, 1, 1);
        const ConvGeometry h_g(stride_, stride_, 0, 1);
        const ConvGeometry v_g(stride_, stride_, 1, 0);
        if (bn_in_branch_) {
            square_bn.emplace(d_, c_, 3, 3, sq_g, bn_eps, bn_momentum);
            if (use_horizontal) {
                horizontal_bn.emplace(d_, c_, 1, 3, h_g, bn_eps, bn_momentum);
                horizontal_bn->shift_dy = h_row_off - 1;
            }
            if (use_vertical) {
                vertical_bn.emplace(d_, c_, 3, 1, v_g, bn_eps, bn_momentum);
                vertical_bn->shift_dx = v_col_off - 1;
            }
        } else {
            square_conv.emplace(d_, c_, 3, 3, sq_g, false);
            if (use_horizontal) horizontal_conv.emplace(d_, c_, 1, 3, h_g, false);
            if (use_vertical) vertical_conv.emplace(d_, c_, 3, 1, v_g, false);
            post_bn.emplace(d_, bn_eps, bn_momentum);
        }
    }

    bool has_horizontal() const { return horizontal_bn.has_value() || horizontal_conv.has_value(); }
    bool has_vertical() const { return vertical_bn.has_value() || vertical_conv.has_value(); }

    Tensor<T> forward(const Tensor<T>& x, RunMode mode) override {
        Tensor<T> y;
        if (bn_in_branch) {
            y = square_bn->forward(x, mode);
            if (horizontal_bn) add_inplace(y, horizontal_bn->forward(x, mode));
            if (vertical_bn) add_inplace(y, vertical_bn->forward(x, mode));
        } else {
            y = square_conv->forward(x, mode);
            if (horizontal_conv)
                add_inplace(y, horizontal_conv->forward(shift2d(x, h_row_off - 1, 0), mode));
            if (vertical_conv)
                add_inplace(y, vertical_conv->forward(shift2d(x, 0, v_col_off - 1), mode));
            y = post_bn->forward(y, mode);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (bn_in_branch) {
            Tensor<T> dx = square_bn->backward(dy);
            if (horizontal_bn) add_inplace(dx, horizontal_bn->backward(dy));
            if (vertical_bn) add_inplace(dx, vertical_bn->backward(dy));
            return dx;
        }
        Tensor<T> g = post_bn->backward(dy);
        Tensor<T> dx = square_conv->backward(g);
        if (horizontal_conv)
            add_inplace(dx, shift2d(horizontal_conv->backward(g), -(h_row_off - 1), 0));
        if (vertical_conv) add_inplace(dx, shift2d(vertical_conv->backward(g), 0, -(v_col_off - 1)));
        return dx;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        if (bn_in_branch) {
            square_bn->collect_params(out);
            if (horizontal_bn) horizontal_bn->collect_params(out);
            if (vertical_bn) vertical_bn->collect_params(out);
        } else {
            square_conv->collect_params(out);
            if (horizontal_conv) horizontal_conv->collect_params(out);
            if (vertical_conv) vertical_conv->collect_params(out);
            post_bn->collect_params(out);
        }
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ACBlockLayer>(*this); }
    const char* kind() const override { return "acb"; }
};

template <typename T>
Tensor<T> acb_forward(ACBlockLayer<T>& block, const Tensor<T>& x, RunMode mode) {
    return block.forward(x, mode);
}

}  // namespace acnet

#endif
