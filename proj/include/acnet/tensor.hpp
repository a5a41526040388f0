#ifndef ACNET_TENSOR_HPP
#define ACNET_TENSOR_HPP

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "acnet/common.hpp"

namespace acnet {

/// Dense NCHW tensor. Values are stored row-major and the container is
/// treated as immutable once an operation has produced it.
template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), data(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {
        if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0) fail_invalid("Tensor: negative dimension");
    }

    size_t numel() const { return static_cast<size_t>(n) * c * h * w; }

    T& at(int in, int ic, int iy, int ix) {
        return data[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    const T& at(int in, int ic, int iy, int ix) const {
        return data[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }

    bool same_dims(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

    std::string dims_str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
               std::to_string(w) + ")";
    }
};

/// A single 2D kernel slice, h x w row-major.
template <typename T>
struct Kernel2D {
    int h = 0, w = 0;
    std::vector<T> v;

    Kernel2D() = default;
    Kernel2D(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, T(0)) {
        if (h_ < 1 || w_ < 1) fail_invalid("Kernel2D: extents must be >= 1");
    }
    Kernel2D(int h_, int w_, std::vector<T> values) : h(h_), w(w_), v(std::move(values)) {
        if (h_ < 1 || w_ < 1) fail_invalid("Kernel2D: extents must be >= 1");
        if (v.size() != static_cast<size_t>(h_) * w_) fail_invalid("Kernel2D: value count mismatch");
    }

    T& at(int r, int col) { return v[static_cast<size_t>(r) * w + col]; }
    const T& at(int r, int col) const { return v[static_cast<size_t>(r) * w + col]; }
};

/// Convolution weights for d filters over c input channels, kernel h x w,
/// with an optional per-filter bias (empty vector = no bias).
template <typename T>
struct FilterBank {
    int d = 0, c = 0, h = 0, w = 0;
    std::vector<T> weights;
    std::vector<T> bias;

    FilterBank() = default;
    FilterBank(int d_, int c_, int h_, int w_, bool with_bias = false)
        : d(d_), c(c_), h(h_), w(w_), weights(static_cast<size_t>(d_) * c_ * h_ * w_, T(0)) {
        if (d_ < 1 || c_ < 1 || h_ < 1 || w_ < 1) fail_invalid("FilterBank: extents must be >= 1");
        if (with_bias) bias.assign(static_cast<size_t>(d_), T(0));
    }

    bool has_bias() const { return !bias.empty(); }
    size_t weight_count() const { return static_cast<size_t>(d) * c * h * w; }

    T& at(int fd, int fc, int ky, int kx) {
        return weights[((static_cast<size_t>(fd) * c + fc) * h + ky) * w + kx];
    }
    const T& at(int fd, int fc, int ky, int kx) const {
        return weights[((static_cast<size_t>(fd) * c + fc) * h + ky) * w + kx];
    }

    Kernel2D<T> kernel(int fd, int fc) const {
        Kernel2D<T> k(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) k.at(y, x) = at(fd, fc, y, x);
        return k;
    }
};

/// Stride and symmetric zero padding for a conv. Output extent follows
/// r = floor((u + 2*p - k) / s) + 1 per axis.
struct ConvGeometry {
    int sh = 1, sw = 1;
    int ph = 0, pw = 0;

    ConvGeometry() = default;
    ConvGeometry(int sh_, int sw_, int ph_, int pw_) : sh(sh_), sw(sw_), ph(ph_), pw(pw_) {
        if (sh_ < 1 || sw_ < 1) fail_invalid("ConvGeometry: stride must be positive");
        if (ph_ < 0 || pw_ < 0) fail_invalid("ConvGeometry: padding must be non-negative");
    }

    static int out_extent(int in, int k, int stride, int pad) {
        const int span = in + 2 * pad - k;
        if (span < 0) return 0;  // truncating division would round the wrong way
        return span / stride + 1;
    }
    int out_h(int in_h, int k) const { return out_extent(in_h, k, sh, ph); }
    int out_w(int in_w, int k) const { return out_extent(in_w, k, sw, pw); }
};

/// Direct 2D convolution in the cross-correlation convention (no kernel
/// flip). Per output value the reduction runs c-major, then kh, then kw,
/// independent of how the (batch, filter) space is split across threads,
/// so repeated runs are bit-identical.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const FilterBank<T>& f, const ConvGeometry& g) {
    if (x.c != f.c)
        fail_invalid("conv2d: input channels (" + std::to_string(x.c) + ") != filter channels (" +
                     std::to_string(f.c) + ")");
    const int oh = g.out_h(x.h, f.h);
    const int ow = g.out_w(x.w, f.w);
    if (oh < 1)
        fail_invalid("conv2d: degenerate output height " + std::to_string(oh) + " from input height " +
                     std::to_string(x.h));
    if (ow < 1)
        fail_invalid("conv2d: degenerate output width " + std::to_string(ow) + " from input width " +
                     std::to_string(x.w));

    Tensor<T> out(x.n, f.d, oh, ow);
    const int C = x.c, H = x.h, W = x.w, KH = f.h, KW = f.w;
    const T* xd = x.data.data();
    const T* wd = f.weights.data();
    T* od = out.data.data();

    const std::int64_t cells = static_cast<std::int64_t>(x.n) * f.d;
    const std::int64_t work_per_cell = static_cast<std::int64_t>(oh) * ow * C * KH * KW;
    const std::int64_t grain = std::max<std::int64_t>(1, (1 << 16) / std::max<std::int64_t>(1, work_per_cell));

    parallel_for(cells, grain, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t cell = lo; cell < hi; ++cell) {
            const int in = static_cast<int>(cell / f.d);
            const int id = static_cast<int>(cell % f.d);
            const T bias = f.has_bias() ? f.bias[id] : T(0);
            for (int i = 0; i < oh; ++i) {
                const int ih0 = i * g.sh - g.ph;
                const int kh_lo = std::max(0, -ih0);
                const int kh_hi = std::min(KH, H - ih0);
                for (int j = 0; j < ow; ++j) {
                    const int iw0 = j * g.sw - g.pw;
                    const int kw_lo = std::max(0, -iw0);
                    const int kw_hi = std::min(KW, W - iw0);
                    T acc = 0;
                    for (int ic = 0; ic < C; ++ic) {
                        for (int r = kh_lo; r < kh_hi; ++r) {
                            const T* xrow =
                                xd + ((static_cast<size_t>(in) * C + ic) * H + (ih0 + r)) * W + iw0;
                            const T* wrow = wd + ((static_cast<size_t>(id) * C + ic) * KH + r) * KW;
                            for (int q = kw_lo; q < kw_hi; ++q) acc += wrow[q] * xrow[q];
                        }
                    }
                    od[((static_cast<size_t>(in) * f.d + id) * oh + i) * ow + j] = acc + bias;
                }
            }
        }
    });
    return out;
}

/// Gradient of conv2d w.r.t. its input: per input cell the reduction runs
/// d-major, then kh, then kw (fixed order, deterministic).
template <typename T>
Tensor<T> conv2d_grad_input(const Tensor<T>& dy, const FilterBank<T>& f, const ConvGeometry& g,
                            int in_h, int in_w) {
    Tensor<T> dx(dy.n, f.c, in_h, in_w);
    const int D = f.d, C = f.c, KH = f.h, KW = f.w, OH = dy.h, OW = dy.w;
    const std::int64_t cells = static_cast<std::int64_t>(dy.n) * C;
    const std::int64_t work_per_cell = static_cast<std::int64_t>(in_h) * in_w * D * KH * KW;
    const std::int64_t grain = std::max<std::int64_t>(1, (1 << 16) / std::max<std::int64_t>(1, work_per_cell));

    parallel_for(cells, grain, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t cell = lo; cell < hi; ++cell) {
            const int in = static_cast<int>(cell / C);
            const int ic = static_cast<int>(cell % C);
            for (int y = 0; y < in_h; ++y) {
                for (int x = 0; x < in_w; ++x) {
                    T acc = 0;
                    for (int id = 0; id < D; ++id) {
                        for (int r = 0; r < KH; ++r) {
                            const int inum = y + g.ph - r;
                            if (inum < 0 || inum % g.sh != 0) continue;
                            const int i = inum / g.sh;
                            if (i >= OH) continue;
                            for (int q = 0; q < KW; ++q) {
                                const int jnum = x + g.pw - q;
                                if (jnum < 0 || jnum % g.sw != 0) continue;
                                const int j = jnum / g.sw;
                                if (j >= OW) continue;
                                acc += f.at(id, ic, r, q) * dy.at(in, id, i, j);
                            }
                        }
                    }
                    dx.at(in, ic, y, x) = acc;
                }
            }
        }
    });
    return dx;
}

/// Gradient of conv2d w.r.t. weights (and bias when dbias != nullptr).
/// Accumulation per weight runs n-major, then output row, then column.
template <typename T>
void conv2d_grad_weights(const Tensor<T>& x, const Tensor<T>& dy, const ConvGeometry& g, int kh,
                         int kw, std::vector<T>& dweights, std::vector<T>* dbias) {
    const int N = x.n, C = x.c, H = x.h, W = x.w, D = dy.c, OH = dy.h, OW = dy.w;
    dweights.assign(static_cast<size_t>(D) * C * kh * kw, T(0));
    if (dbias) dbias->assign(static_cast<size_t>(D), T(0));

    const std::int64_t work_per_filter = static_cast<std::int64_t>(N) * OH * OW * C * kh * kw;
    const std::int64_t grain = std::max<std::int64_t>(1, (1 << 16) / std::max<std::int64_t>(1, work_per_filter));
    parallel_for(D, grain, [&](std::int64_t lo, std::int64_t hi) {
        for (int id = static_cast<int>(lo); id < static_cast<int>(hi); ++id) {
            T* gw = dweights.data() + static_cast<size_t>(id) * C * kh * kw;
            T bias_acc = 0;
            for (int in = 0; in < N; ++in) {
                for (int i = 0; i < OH; ++i) {
                    const int ih0 = i * g.sh - g.ph;
                    for (int j = 0; j < OW; ++j) {
                        const int iw0 = j * g.sw - g.pw;
                        const T dyv = dy.at(in, id, i, j);
                        bias_acc += dyv;
                        for (int ic = 0; ic < C; ++ic) {
                            for (int r = 0; r < kh; ++r) {
                                const int iy = ih0 + r;
                                if (iy < 0 || iy >= H) continue;
                                const T* xrow = x.data.data() +
                                                ((static_cast<size_t>(in) * C + ic) * H + iy) * W;
                                T* grow = gw + (static_cast<size_t>(ic) * kh + r) * kw;
                                for (int q = 0; q < kw; ++q) {
                                    const int ix = iw0 + q;
                                    if (ix < 0 || ix >= W) continue;
                                    grow[q] += dyv * xrow[ix];
                                }
                            }
                        }
                    }
                }
            }
            if (dbias) (*dbias)[id] = bias_acc;
        }
    });
}

/// Places `small` inside a zeroed target_h x target_w kernel at the given
/// offset; the embedding realizes the "patch the smaller kernel onto the
/// bigger" step of kernel addition.
template <typename T>
Kernel2D<T> embed_kernel(const Kernel2D<T>& small, int target_h, int target_w, int row_off,
                         int col_off) {
    if (row_off < 0 || col_off < 0 || row_off + small.h > target_h || col_off + small.w > target_w)
        fail_invalid("embed_kernel: offset (" + std::to_string(row_off) + "," +
                     std::to_string(col_off) + ") overflows " + std::to_string(target_h) + "x" +
                     std::to_string(target_w) + " target");
    Kernel2D<T> out(target_h, target_w);
    for (int r = 0; r < small.h; ++r)
        for (int q = 0; q < small.w; ++q) out.at(row_off + r, col_off + q) = small.at(r, q);
    return out;
}

template <typename T>
Kernel2D<T> kernel_add(const Kernel2D<T>& a, const Kernel2D<T>& b) {
    if (a.h != b.h || a.w != b.w)
        fail_invalid("kernel_add: extent mismatch " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                     " vs " + std::to_string(b.h) + "x" + std::to_string(b.w));
    Kernel2D<T> out = a;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    return out;
}

/// Counterclockwise quarter turn of the spatial axes.
template <typename T>
Tensor<T> rot90(const Tensor<T>& x) {
    Tensor<T> out(x.n, x.c, x.w, x.h);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic)
            for (int y = 0; y < out.h; ++y)
                for (int q = 0; q < out.w; ++q) out.at(in, ic, y, q) = x.at(in, ic, q, x.w - 1 - y);
    return out;
}

template <typename T>
Tensor<T> rot180(const Tensor<T>& x) {
    Tensor<T> out(x.n, x.c, x.h, x.w);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic)
            for (int y = 0; y < x.h; ++y)
                for (int q = 0; q < x.w; ++q)
                    out.at(in, ic, y, q) = x.at(in, ic, x.h - 1 - y, x.w - 1 - q);
    return out;
}

template <typename T>
Tensor<T> flip_ud(const Tensor<T>& x) {
    Tensor<T> out(x.n, x.c, x.h, x.w);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic)
            for (int y = 0; y < x.h; ++y)
                for (int q = 0; q < x.w; ++q) out.at(in, ic, y, q) = x.at(in, ic, x.h - 1 - y, q);
    return out;
}

template <typename T>
Tensor<T> flip_lr(const Tensor<T>& x) {
    Tensor<T> out(x.n, x.c, x.h, x.w);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic)
            for (int y = 0; y < x.h; ++y)
                for (int q = 0; q < x.w; ++q) out.at(in, ic, y, q) = x.at(in, ic, y, x.w - 1 - q);
    return out;
}

/// Zero-filled spatial shift: out(y, x) = in(y + dy, x + dx).
template <typename T>
Tensor<T> shift2d(const Tensor<T>& x, int dy, int dx) {
    if (dy == 0 && dx == 0) return x;
    Tensor<T> out(x.n, x.c, x.h, x.w);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic)
            for (int y = 0; y < x.h; ++y) {
                const int sy = y + dy;
                if (sy < 0 || sy >= x.h) continue;
                for (int q = 0; q < x.w; ++q) {
                    const int sx = q + dx;
                    if (sx < 0 || sx >= x.w) continue;
                    out.at(in, ic, y, q) = x.at(in, ic, sy, sx);
                }
            }
    return out;
}

}  // namespace acnet

#endif
