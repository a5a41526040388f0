#ifndef ACNET_LAYERS_HPP
#define ACNET_LAYERS_HPP

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "acnet/tensor.hpp"

namespace acnet {

enum class RunMode { train, eval };

/// Trainable value plus its gradient accumulator. Gradients accumulate
/// across backward calls and are cleared by the optimizer step.
template <typename T>
struct Param {
    std::vector<T> value;
    std::vector<T> grad;
    std::uint64_t id;

    explicit Param(size_t count) : value(count, T(0)), grad(count, T(0)), id(next_id()) {}

    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

    static std::uint64_t next_id() {
        static std::atomic<std::uint64_t> counter{1};
        return counter.fetch_add(1);
    }
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, RunMode mode) = 0;
    virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
    virtual void collect_params(std::vector<Param<T>*>& /*out*/) {}
    virtual std::unique_ptr<Layer<T>> clone() const = 0;
    virtual const char* kind() const = 0;
};

namespace detail {
[[noreturn]] inline void no_forward(const char* kind) {
    fail_runtime(std::string(kind) + ": backward called with no recorded forward pass (detached graph)");
}
}  // namespace detail

template <typename T>
class Conv2dLayer final : public Layer<T> {
public:
    int d, c, kh, kw;
    ConvGeometry geom;
    Param<T> weight;
    std::optional<Param<T>> bias;

    Conv2dLayer(int d_, int c_, int kh_, int kw_, ConvGeometry g, bool with_bias)
        : d(d_), c(c_), kh(kh_), kw(kw_), geom(g), weight(static_cast<size_t>(d_) * c_ * kh_ * kw_) {
        if (with_bias) bias.emplace(static_cast<size_t>(d_));
    }

    FilterBank<T> bank() const {
        FilterBank<T> f(d, c, kh, kw, bias.has_value());
        f.weights = weight.value;
        if (bias) f.bias = bias->value;
        return f;
    }

    T& at(int fd, int fc, int ky, int kx) {
        return weight.value[((static_cast<size_t>(fd) * c + fc) * kh + ky) * kw + kx];
    }
    const T& at(int fd, int fc, int ky, int kx) const {
        return weight.value[((static_cast<size_t>(fd) * c + fc) * kh + ky) * kw + kx];
    }

    void set_bank(const FilterBank<T>& f) {
        if (f.d != d || f.c != c || f.h != kh || f.w != kw)
            fail_invalid("Conv2dLayer: bank shape mismatch");
        weight.value = f.weights;
        if (f.has_bias()) {
            if (!bias) bias.emplace(static_cast<size_t>(d));
            bias->value = f.bias;
        }
    }

    Tensor<T> forward(const Tensor<T>& x, RunMode) override {
        x_cache_ = x;
        has_cache_ = true;
        return conv2d(x, bank(), geom);
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (!has_cache_) detail::no_forward(kind());
        std::vector<T> dw;
        std::vector<T> db;
        conv2d_grad_weights(x_cache_, dy, geom, kh, kw, dw, bias ? &db : nullptr);
        for (size_t i = 0; i < dw.size(); ++i) weight.grad[i] += dw[i];
        if (bias)
            for (size_t i = 0; i < db.size(); ++i) bias->grad[i] += db[i];
        return conv2d_grad_input(dy, bank(), geom, x_cache_.h, x_cache_.w);
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        out.push_back(&weight);
        if (bias) out.push_back(&*bias);
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2dLayer>(*this); }
    const char* kind() const override { return "conv"; }

private:
    Tensor<T> x_cache_;
    bool has_cache_ = false;
};

/// Per-channel batch normalization with learned scale/shift. Train mode
/// normalizes with batch statistics (biased variance) and blends them into
/// the running estimates; eval mode uses the running estimates.
template <typename T>
class BatchNorm final : public Layer<T> {
public:
    Param<T> gamma;
    Param<T> beta;
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T eps;
    T momentum;

    explicit BatchNorm(int channels, T eps_ = T(1e-5), T momentum_ = T(0.1))
        : gamma(static_cast<size_t>(channels)),
          beta(static_cast<size_t>(channels)),
          running_mean(static_cast<size_t>(channels), T(0)),
          running_var(static_cast<size_t>(channels), T(1)),
          eps(eps_),
          momentum(momentum_) {
        if (!(eps_ > T(0))) fail_invalid("BatchNorm: eps must be positive");
        if (!(momentum_ > T(0)) || momentum_ > T(1)) fail_invalid("BatchNorm: momentum must be in (0,1]");
        std::fill(gamma.value.begin(), gamma.value.end(), T(1));
    }

    int channels() const { return static_cast<int>(gamma.value.size()); }

    Tensor<T> forward(const Tensor<T>& x, RunMode mode) override {
        if (x.c != channels())
            fail_invalid("BatchNorm: input channels (" + std::to_string(x.c) + ") != state channels (" +
                         std::to_string(channels()) + ")");
        const int C = x.c;
        const std::int64_t m = static_cast<std::int64_t>(x.n) * x.h * x.w;
        Tensor<T> out(x.n, x.c, x.h, x.w);
        xhat_cache_ = Tensor<T>(x.n, x.c, x.h, x.w);
        inv_std_cache_.assign(static_cast<size_t>(C), T(0));
        cached_mode_ = mode;
        has_cache_ = true;

        for (int ic = 0; ic < C; ++ic) {
            T mean, var;
            if (mode == RunMode::train) {
                if (m == 0) fail_invalid("BatchNorm: empty batch in train mode");
                T sum = 0;
                for_channel(x, ic, [&](T v) { sum += v; });
                mean = sum / static_cast<T>(m);
                T sq = 0;
                for_channel(x, ic, [&](T v) { sq += (v - mean) * (v - mean); });
                var = sq / static_cast<T>(m);
                running_mean[ic] = (T(1) - momentum) * running_mean[ic] + momentum * mean;
                running_var[ic] = (T(1) - momentum) * running_var[ic] + momentum * var;
            } else {
                mean = running_mean[ic];
                var = running_var[ic];
            }
            if (!(var + eps > T(0))) fail_invalid("BatchNorm: non-positive variance + eps");
            const T inv_std = T(1) / std::sqrt(var + eps);
            inv_std_cache_[ic] = inv_std;
            const T g = gamma.value[ic], b = beta.value[ic];
            transform_channel(x, out, xhat_cache_, ic, [&](T v, T& o, T& xh) {
                xh = (v - mean) * inv_std;
                o = g * xh + b;
            });
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (!has_cache_) detail::no_forward(kind());
        const int C = dy.c;
        const std::int64_t m = static_cast<std::int64_t>(dy.n) * dy.h * dy.w;
        Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
        for (int ic = 0; ic < C; ++ic) {
            T sum_dy = 0, sum_dy_xhat = 0;
            for_channel_pair(dy, xhat_cache_, ic, [&](T g, T xh) {
                sum_dy += g;
                sum_dy_xhat += g * xh;
            });
            gamma.grad[ic] += sum_dy_xhat;
            beta.grad[ic] += sum_dy;
            const T gs = gamma.value[ic] * inv_std_cache_[ic];
            if (cached_mode_ == RunMode::train) {
                const T mean_dy = sum_dy / static_cast<T>(m);
                const T mean_dy_xhat = sum_dy_xhat / static_cast<T>(m);
                transform_channel(dy, dx, xhat_cache_, ic, [&](T g, T& o, T& xh) {
                    o = gs * (g - mean_dy - xh * mean_dy_xhat);
                });
            } else {
                transform_channel(dy, dx, xhat_cache_, ic, [&](T g, T& o, T&) { o = gs * g; });
            }
        }
        return dx;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        out.push_back(&gamma);
        out.push_back(&beta);
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNorm>(*this); }
    const char* kind() const override { return "bn"; }

private:
    Tensor<T> xhat_cache_;
    std::vector<T> inv_std_cache_;
    RunMode cached_mode_ = RunMode::eval;
    bool has_cache_ = false;

    template <typename Fn>
    static void for_channel(const Tensor<T>& t, int ic, Fn&& fn) {
        for (int in = 0; in < t.n; ++in) {
            const T* p = t.data.data() + ((static_cast<size_t>(in) * t.c + ic) * t.h) * t.w;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(t.h) * t.w; ++i) fn(p[i]);
        }
    }
    template <typename Fn>
    static void for_channel_pair(const Tensor<T>& a, const Tensor<T>& b, int ic, Fn&& fn) {
        for (int in = 0; in < a.n; ++in) {
            const size_t off = ((static_cast<size_t>(in) * a.c + ic) * a.h) * a.w;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(a.h) * a.w; ++i)
                fn(a.data[off + i], b.data[off + i]);
        }
    }
    template <typename Fn>
    static void transform_channel(const Tensor<T>& in_t, Tensor<T>& out_t, Tensor<T>& aux, int ic,
                                  Fn&& fn) {
        for (int in = 0; in < in_t.n; ++in) {
            const size_t off = ((static_cast<size_t>(in) * in_t.c + ic) * in_t.h) * in_t.w;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(in_t.h) * in_t.w; ++i)
                fn(in_t.data[off + i], out_t.data[off + i], aux.data[off + i]);
        }
    }
};

template <typename T>
class ReluLayer final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, RunMode) override {
        x_cache_ = x;
        has_cache_ = true;
        Tensor<T> out = x;
        for (auto& v : out.data) v = v > T(0) ? v : T(0);
        return out;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (!has_cache_) detail::no_forward(kind());
        Tensor<T> dx = dy;
        for (size_t i = 0; i < dx.data.size(); ++i)
            if (x_cache_.data[i] <= T(0)) dx.data[i] = T(0);
        return dx;
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReluLayer>(*this); }
    const char* kind() const override { return "relu"; }

private:
    Tensor<T> x_cache_;
    bool has_cache_ = false;
};

template <typename T>
class MaxPoolLayer final : public Layer<T> {
public:
    int k, stride;

    MaxPoolLayer(int k_, int stride_) : k(k_), stride(stride_) {
        if (k_ < 1 || stride_ < 1) fail_invalid("MaxPoolLayer: window and stride must be positive");
    }

    Tensor<T> forward(const Tensor<T>& x, RunMode) override {
        const int oh = x.h < k ? 0 : (x.h - k) / stride + 1;
        const int ow = x.w < k ? 0 : (x.w - k) / stride + 1;
        if (oh < 1 || ow < 1)
            fail_invalid("MaxPoolLayer: window " + std::to_string(k) + " exceeds input " +
                         std::to_string(x.h) + "x" + std::to_string(x.w));
        Tensor<T> out(x.n, x.c, oh, ow);
        argmax_.assign(out.numel(), 0);
        in_h_ = x.h;
        in_w_ = x.w;
        in_n_ = x.n;
        in_c_ = x.c;
        has_cache_ = true;
        size_t oi = 0;
        for (int in = 0; in < x.n; ++in)
            for (int ic = 0; ic < x.c; ++ic)
                for (int i = 0; i < oh; ++i)
                    for (int j = 0; j < ow; ++j, ++oi) {
                        T best = x.at(in, ic, i * stride, j * stride);
                        size_t best_idx =
                            ((static_cast<size_t>(in) * x.c + ic) * x.h + i * stride) * x.w + j * stride;
                        for (int r = 0; r < k; ++r)
                            for (int q = 0; q < k; ++q) {
                                const T v = x.at(in, ic, i * stride + r, j * stride + q);
                                if (v > best) {
                                    best = v;
                                    best_idx = ((static_cast<size_t>(in) * x.c + ic) * x.h + i * stride + r) *
                                                   x.w +
                                               j * stride + q;
                                }
                            }
                        out.data[oi] = best;
                        argmax_[oi] = best_idx;
                    }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (!has_cache_) detail::no_forward(kind());
        Tensor<T> dx(in_n_, in_c_, in_h_, in_w_);
        for (size_t oi = 0; oi < dy.data.size(); ++oi) dx.data[argmax_[oi]] += dy.data[oi];
        return dx;
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPoolLayer>(*this); }
    const char* kind() const override { return "maxpool"; }

private:
    std::vector<size_t> argmax_;
    int in_h_ = 0, in_w_ = 0, in_n_ = 0, in_c_ = 0;
    bool has_cache_ = false;
};

template <typename T>
class GlobalAvgPoolLayer final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, RunMode) override {
        in_h_ = x.h;
        in_w_ = x.w;
        has_cache_ = true;
        Tensor<T> out(x.n, x.c, 1, 1);
        const T scale = T(1) / static_cast<T>(x.h * x.w);
        for (int in = 0; in < x.n; ++in)
            for (int ic = 0; ic < x.c; ++ic) {
                T sum = 0;
                for (int i = 0; i < x.h; ++i)
                    for (int j = 0; j < x.w; ++j) sum += x.at(in, ic, i, j);
                out.at(in, ic, 0, 0) = sum * scale;
            }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (!has_cache_) detail::no_forward(kind());
        Tensor<T> dx(dy.n, dy.c, in_h_, in_w_);
        const T scale = T(1) / static_cast<T>(in_h_ * in_w_);
        for (int in = 0; in < dy.n; ++in)
            for (int ic = 0; ic < dy.c; ++ic) {
                const T g = dy.at(in, ic, 0, 0) * scale;
                for (int i = 0; i < in_h_; ++i)
                    for (int j = 0; j < in_w_; ++j) dx.at(in, ic, i, j) = g;
            }
        return dx;
    }

    std::unique_ptr<Layer<T>> clone() const override {
        return std::make_unique<GlobalAvgPoolLayer>(*this);
    }
    const char* kind() const override { return "gap"; }

private:
    int in_h_ = 0, in_w_ = 0;
    bool has_cache_ = false;
};

/// Fully connected layer over the flattened (c*h*w) features.
template <typename T>
class LinearLayer final : public Layer<T> {
public:
    int classes, features;
    Param<T> weight;  // classes x features, row-major
    Param<T> bias;

    LinearLayer(int classes_, int features_)
        : classes(classes_),
          features(features_),
          weight(static_cast<size_t>(classes_) * features_),
          bias(static_cast<size_t>(classes_)) {}

    Tensor<T> forward(const Tensor<T>& x, RunMode) override {
        if (x.c * x.h * x.w != features)
            fail_invalid("LinearLayer: expected " + std::to_string(features) + " features, got " +
                         x.dims_str());
        x_cache_ = x;
        has_cache_ = true;
        Tensor<T> out(x.n, classes, 1, 1);
        for (int in = 0; in < x.n; ++in) {
            const T* xv = x.data.data() + static_cast<size_t>(in) * features;
            for (int kcls = 0; kcls < classes; ++kcls) {
                const T* wr = weight.value.data() + static_cast<size_t>(kcls) * features;
                T acc = bias.value[kcls];
                for (int fI = 0; fI < features; ++fI) acc += wr[fI] * xv[fI];
                out.at(in, kcls, 0, 0) = acc;
            }
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (!has_cache_) detail::no_forward(kind());
        Tensor<T> dx(x_cache_.n, x_cache_.c, x_cache_.h, x_cache_.w);
        for (int kcls = 0; kcls < classes; ++kcls) {
            T* gw = weight.grad.data() + static_cast<size_t>(kcls) * features;
            T gb = 0;
            for (int in = 0; in < dy.n; ++in) {
                const T g = dy.at(in, kcls, 0, 0);
                gb += g;
                const T* xv = x_cache_.data.data() + static_cast<size_t>(in) * features;
                for (int fI = 0; fI < features; ++fI) gw[fI] += g * xv[fI];
            }
            bias.grad[kcls] += gb;
        }
        for (int in = 0; in < dy.n; ++in) {
            T* dxv = dx.data.data() + static_cast<size_t>(in) * features;
            for (int kcls = 0; kcls < classes; ++kcls) {
                const T g = dy.at(in, kcls, 0, 0);
                const T* wr = weight.value.data() + static_cast<size_t>(kcls) * features;
                for (int fI = 0; fI < features; ++fI) dxv[fI] += g * wr[fI];
            }
        }
        return dx;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        out.push_back(&weight);
        out.push_back(&bias);
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<LinearLayer>(*this); }
    const char* kind() const override { return "linear"; }

private:
    Tensor<T> x_cache_;
    bool has_cache_ = false;
};

template <typename T>
struct SoftmaxXentResult {
    double loss = 0.0;     // mean over the batch
    Tensor<T> dlogits;     // d(loss)/d(logits)
    Tensor<T> probs;
};

/// Numerically stable softmax + cross-entropy over logits of shape
/// (n, classes, 1, 1).
template <typename T>
SoftmaxXentResult<T> softmax_xent(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.h != 1 || logits.w != 1)
        fail_invalid("softmax_xent: logits must be (n, classes, 1, 1), got " + logits.dims_str());
    if (labels.size() != static_cast<size_t>(logits.n))
        fail_invalid("softmax_xent: label count mismatch");
    const int K = logits.c;
    SoftmaxXentResult<T> r;
    r.dlogits = Tensor<T>(logits.n, K, 1, 1);
    r.probs = Tensor<T>(logits.n, K, 1, 1);
    double loss = 0.0;
    for (int in = 0; in < logits.n; ++in) {
        if (labels[in] < 0 || labels[in] >= K) fail_invalid("softmax_xent: label out of range");
        T mx = logits.at(in, 0, 0, 0);
        for (int kcls = 1; kcls < K; ++kcls) mx = std::max(mx, logits.at(in, kcls, 0, 0));
        T denom = 0;
        for (int kcls = 0; kcls < K; ++kcls) denom += std::exp(logits.at(in, kcls, 0, 0) - mx);
        for (int kcls = 0; kcls < K; ++kcls) {
            const T p = std::exp(logits.at(in, kcls, 0, 0) - mx) / denom;
            r.probs.at(in, kcls, 0, 0) = p;
            r.dlogits.at(in, kcls, 0, 0) =
                (p - (kcls == labels[in] ? T(1) : T(0))) / static_cast<T>(logits.n);
        }
        loss += -(static_cast<double>(logits.at(in, labels[in], 0, 0) - mx) -
                  std::log(static_cast<double>(denom)));
    }
    r.loss = loss / logits.n;
    return r;
}

template <typename T>
std::vector<int> argmax_classes(const Tensor<T>& logits) {
    std::vector<int> pred(static_cast<size_t>(logits.n), 0);
    for (int in = 0; in < logits.n; ++in) {
        int best = 0;
        for (int kcls = 1; kcls < logits.c; ++kcls)
            if (logits.at(in, kcls, 0, 0) > logits.at(in, best, 0, 0)) best = kcls;
        pred[static_cast<size_t>(in)] = best;
    }
    return pred;
}

}  // namespace acnet

#endif
