#ifndef ACNET_DATA_HPP
#define ACNET_DATA_HPP

#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "acnet/rng.hpp"
#include "acnet/tensor.hpp"

namespace acnet {

template <typename T>
struct Dataset {
    Tensor<T> images;  // (n, c, h, w)
    std::vector<int> labels;
    int class_count = 0;

    int size() const { return images.n; }

    void validate() const {
        if (labels.size() != static_cast<size_t>(images.n))
            fail_invalid("Dataset: label count != image count");
        for (int l : labels)
            if (l < 0 || l >= class_count) fail_invalid("Dataset: label out of range");
    }
};

/// Copies the selected samples into a contiguous batch.
template <typename T>
Dataset<T> gather(const Dataset<T>& d, const std::vector<int>& indices) {
    Dataset<T> out;
    out.class_count = d.class_count;
    out.images = Tensor<T>(static_cast<int>(indices.size()), d.images.c, d.images.h, d.images.w);
    out.labels.resize(indices.size());
    const size_t per = static_cast<size_t>(d.images.c) * d.images.h * d.images.w;
    for (size_t i = 0; i < indices.size(); ++i) {
        const int src = indices[i];
        std::copy_n(d.images.data.data() + src * per, per, out.images.data.data() + i * per);
        out.labels[i] = d.labels[src];
    }
    return out;
}

/// Deterministic grayscale oriented-stripe dataset: class k is a sinusoidal
/// grating at angle pi*k/classes with random phase, contrast and wavelength
/// plus seeded Gaussian noise. Labels cycle 0..classes-1, so n = classes*k
/// is exactly class-balanced. Contrast and noise are set so that an
/// oriented-energy baseline separates the classes while a small CNN still
/// has headroom to learn.
template <typename T>
Dataset<T> gen_synthetic(int n, std::uint64_t seed, int size = 16, int classes = 4) {
    if (classes < 2) fail_invalid("gen_synthetic: need at least 2 classes");
    if (n < 0 || size < 2) fail_invalid("gen_synthetic: bad sample count or size");
    Rng rng(seed ^ 0x5d47a0ull);
    Dataset<T> d;
    d.class_count = classes;
    d.images = Tensor<T>(n, 1, size, size);
    d.labels.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int label = i % classes;
        d.labels[static_cast<size_t>(i)] = label;
        const double theta = std::numbers::pi * label / classes;
        // stripes run along (cos t, sin t); intensity varies along the normal
        const double nx = -std::sin(theta), ny = std::cos(theta);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double amp = rng.uniform(0.10, 0.28);
        const double wavelength = rng.uniform(0.26, 0.42) * size;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double v = 0.5 + amp * std::sin(2.0 * std::numbers::pi * (x * nx + y * ny) / wavelength +
                                                phase);
                v += 0.22 * rng.normal();
                d.images.at(i, 0, y, x) = static_cast<T>(std::clamp(v, 0.0, 1.0));
            }
    }
    return d;
}

struct AugmentConfig {
    int pad_to = 0;        // padded extent; 0 disables pad+crop
    int crop = 0;          // crop extent; 0 means "original extent"
    double flip_prob = 0.0;
};

/// Zero-pad to pad_to, randomly crop back to the crop extent, flip
/// left-right with the given probability. Labels are untouched by
/// construction (images only).
template <typename T>
Tensor<T> augment(const Tensor<T>& batch, const AugmentConfig& cfg, Rng& rng) {
    const int crop_h = cfg.crop > 0 ? cfg.crop : batch.h;
    const int crop_w = cfg.crop > 0 ? cfg.crop : batch.w;
    const int pad_h = cfg.pad_to > 0 ? cfg.pad_to : batch.h;
    const int pad_w = cfg.pad_to > 0 ? cfg.pad_to : batch.w;
    if (crop_h > pad_h || crop_w > pad_w) fail_invalid("augment: crop exceeds padded extent");
    if (pad_h < batch.h || pad_w < batch.w) fail_invalid("augment: pad-to smaller than input");

    const int off_h = (pad_h - batch.h) / 2;
    const int off_w = (pad_w - batch.w) / 2;
    Tensor<T> out(batch.n, batch.c, crop_h, crop_w);
    for (int in = 0; in < batch.n; ++in) {
        const int oy = static_cast<int>(rng.next_index(pad_h - crop_h + 1));
        const int ox = static_cast<int>(rng.next_index(pad_w - crop_w + 1));
        const bool flip = rng.bernoulli(cfg.flip_prob);
        for (int ic = 0; ic < batch.c; ++ic)
            for (int y = 0; y < crop_h; ++y)
                for (int x = 0; x < crop_w; ++x) {
                    const int sx_pre = flip ? (crop_w - 1 - x) : x;
                    const int sy = oy + y - off_h;          // source row in the unpadded image
                    const int sx = ox + sx_pre - off_w;
                    T v = T(0);
                    if (sy >= 0 && sy < batch.h && sx >= 0 && sx < batch.w) v = batch.at(in, ic, sy, sx);
                    out.at(in, ic, y, x) = v;
                }
    }
    return out;
}

/// Parses CIFAR-10 binary batches: 3073-byte records, one label byte then
/// 3072 pixel bytes in channel-planar order (red, green, blue planes of
/// 1024 row-major values each). Pixels are scaled to [0,1]; the optional
/// flag applies per-channel mean/std normalization afterwards.
template <typename T>
Dataset<T> load_cifar10_binary(const std::vector<std::string>& paths, bool normalize = false) {
    constexpr size_t record = 3073;
    Dataset<T> d;
    d.class_count = 10;
    std::vector<std::uint8_t> bytes;
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail_runtime("load_cifar10_binary: cannot open " + path);
        std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
        if (file.size() % record != 0)
            fail_runtime("load_cifar10_binary: " + path + " length " + std::to_string(file.size()) +
                         " is not a multiple of 3073");
        bytes.insert(bytes.end(), file.begin(), file.end());
    }
    const int n = static_cast<int>(bytes.size() / record);
    d.images = Tensor<T>(n, 3, 32, 32);
    d.labels.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::uint8_t* rec = bytes.data() + static_cast<size_t>(i) * record;
        if (rec[0] > 9)
            fail_runtime("load_cifar10_binary: record " + std::to_string(i) + " has label byte " +
                         std::to_string(rec[0]));
        d.labels[static_cast<size_t>(i)] = rec[0];
        for (int ic = 0; ic < 3; ++ic)
            for (int p = 0; p < 1024; ++p)
                d.images.data[(static_cast<size_t>(i) * 3 + ic) * 1024 + p] =
                    static_cast<T>(rec[1 + ic * 1024 + p] / 255.0);
    }
    if (normalize && n > 0) {
        for (int ic = 0; ic < 3; ++ic) {
            double sum = 0.0, sq = 0.0;
            const std::int64_t m = static_cast<std::int64_t>(n) * 1024;
            for (int i = 0; i < n; ++i)
                for (int p = 0; p < 1024; ++p)
                    sum += d.images.data[(static_cast<size_t>(i) * 3 + ic) * 1024 + p];
            const double mean = sum / m;
            for (int i = 0; i < n; ++i)
                for (int p = 0; p < 1024; ++p) {
                    const double v = d.images.data[(static_cast<size_t>(i) * 3 + ic) * 1024 + p] - mean;
                    sq += v * v;
                }
            const double stdev = std::sqrt(sq / m) + 1e-8;
            for (int i = 0; i < n; ++i)
                for (int p = 0; p < 1024; ++p) {
                    auto& v = d.images.data[(static_cast<size_t>(i) * 3 + ic) * 1024 + p];
                    v = static_cast<T>((v - mean) / stdev);
                }
        }
    }
    return d;
}

}  // namespace acnet

#endif
