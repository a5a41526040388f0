#ifndef ACNET_ANALYSIS_HPP
#define ACNET_ANALYSIS_HPP

#include <array>
#include <cmath>

#include "acnet/train.hpp"

namespace acnet {

/// Layer-averaged, per-layer max-normalized sum of absolute 3x3 kernel
/// values: A = (1/L) * sum_i S_i / max(S_i) with
/// S_i(r,c) = sum_{filters,channels} |w(r,c)|.
struct MagnitudeMatrix {
    std::array<double, 9> a{};
    int layer_count = 0;

    double at(int r, int c) const { return a[static_cast<size_t>(r) * 3 + c]; }

    double mean_over(const std::vector<std::pair<int, int>>& cells) const {
        double s = 0.0;
        for (auto [r, c] : cells) s += at(r, c);
        return cells.empty() ? 0.0 : s / cells.size();
    }
};

template <typename T>
MagnitudeMatrix magnitude_matrix(Model<T>& model) {
    MagnitudeMatrix m;
    for (auto& layer : model.layers) {
        if (std::string(layer->kind()) != "conv") continue;
        auto& conv = static_cast<Conv2dLayer<T>&>(*layer);
        if (conv.kh != 3 || conv.kw != 3) continue;
        std::array<double, 9> s{};
        for (int j = 0; j < conv.d; ++j)
            for (int ic = 0; ic < conv.c; ++ic)
                for (int r = 0; r < 3; ++r)
                    for (int q = 0; q < 3; ++q)
                        s[static_cast<size_t>(r) * 3 + q] += std::abs(static_cast<double>(conv.at(j, ic, r, q)));
        double mx = 0.0;
        for (double v : s) mx = std::max(mx, v);
        if (mx == 0.0) fail_invalid("magnitude_matrix: all-zero 3x3 layer");
        for (size_t i = 0; i < 9; ++i) m.a[i] += s[i] / mx;
        ++m.layer_count;
    }
    if (m.layer_count == 0) fail_invalid("magnitude_matrix: model has no plain 3x3 conv layers");
    for (auto& v : m.a) v /= m.layer_count;
    return m;
}

/// Named subsets of the nine 3x3 kernel positions.
enum class LocationSet { corners, skeleton, global_all, border, top_left_2x2 };

const std::vector<std::pair<int, int>>& location_cells(LocationSet set);
const char* location_set_name(LocationSet set);
LocationSet parse_location_set(const std::string& name);

/// Sparsity a set can reach: zeroing every cell of the set in every kernel
/// gives |set|/9 of the layer's 3x3 weights.
inline double location_set_cap(LocationSet set) {
    return static_cast<double>(location_cells(set).size()) / 9.0;
}

namespace detail {

template <typename T>
std::vector<Conv2dLayer<T>*> prunable_layers(Model<T>& model) {
    std::vector<Conv2dLayer<T>*> out;
    for (auto& layer : model.layers) {
        const std::string k = layer->kind();
        if (k == "acb")
            fail_invalid("prune_by_location: model contains unfused ACB blocks; fuse first");
        Conv2dLayer<T>* conv = nullptr;
        if (k == "conv")
            conv = &static_cast<Conv2dLayer<T>&>(*layer);
        else if (k == "convbn")
            conv = &static_cast<ConvBnLayer<T>&>(*layer).conv;
        if (conv && conv->kh == 3 && conv->kw == 3) out.push_back(conv);
    }
    return out;
}

}  // namespace detail

/// Zeroes uniformly random weights within the location set of every 3x3
/// conv layer until the layer's global sparsity (zeroed / all 3x3 weights)
/// reaches the target. Deterministic under seed; rejects targets beyond
/// the set's |set|/9 cap.
template <typename T>
Model<T> prune_by_location(const Model<T>& model, LocationSet set, double target_sparsity,
                           std::uint64_t seed) {
    if (target_sparsity < 0.0) fail_invalid("prune_by_location: negative sparsity");
    const auto& cells = location_cells(set);
    const double cap = location_set_cap(set);
    if (target_sparsity > cap + 1e-9)
        fail_invalid("prune_by_location: target sparsity " + std::to_string(target_sparsity) +
                     " exceeds the " + location_set_name(set) + " cap " + std::to_string(cap));
    Model<T> pruned = model.clone();
    auto layers = detail::prunable_layers(pruned);
    if (layers.empty()) fail_invalid("prune_by_location: model has no 3x3 conv layers");
    Rng base(seed ^ 0x9121e5ull);
    int layer_no = 0;
    for (Conv2dLayer<T>* conv : layers) {
        const std::int64_t total = static_cast<std::int64_t>(conv->d) * conv->c * 9;
        const std::int64_t want = std::llround(target_sparsity * static_cast<double>(total));
        std::vector<std::int64_t> slots;
        slots.reserve(static_cast<size_t>(conv->d) * conv->c * cells.size());
        for (int j = 0; j < conv->d; ++j)
            for (int ic = 0; ic < conv->c; ++ic)
                for (auto [r, q] : cells)
                    slots.push_back(((static_cast<std::int64_t>(j) * conv->c + ic) * 3 + r) * 3 + q);
        if (want > static_cast<std::int64_t>(slots.size()))
            fail_invalid("prune_by_location: rounded target exceeds the set's slots");
        Rng rng = base.fork(static_cast<std::uint64_t>(layer_no++));
        rng.shuffle(slots.begin(), slots.end());
        for (std::int64_t i = 0; i < want; ++i)
            conv->weight.value[static_cast<size_t>(slots[static_cast<size_t>(i)])] = T(0);
    }
    return pruned;
}

struct SweepRow {
    LocationSet set = LocationSet::global_all;
    double sparsity = 0.0;
    double mean_acc = 0.0;
    double std_acc = 0.0;
};

/// Fig.-5 protocol: per (set, sparsity) prune with each seed, evaluate, and
/// report mean and standard deviation of the accuracy.
template <typename T>
std::vector<SweepRow> sparsity_sweep(Model<T>& model, const std::vector<LocationSet>& sets,
                                     const std::vector<double>& grid,
                                     const std::vector<std::uint64_t>& seeds, const Dataset<T>& data,
                                     int batch = 128) {
    if (seeds.empty()) fail_invalid("sparsity_sweep: need at least one seed");
    std::vector<SweepRow> rows;
    for (LocationSet set : sets) {
        for (double sp : grid) {
            std::vector<double> accs;
            accs.reserve(seeds.size());
            for (std::uint64_t s : seeds) {
                Model<T> pruned = prune_by_location(model, set, sp, s);
                accs.push_back(evaluate_accuracy(pruned, data, batch));
            }
            double mean = 0.0;
            for (double v : accs) mean += v;
            mean /= accs.size();
            double var = 0.0;
            for (double v : accs) var += (v - mean) * (v - mean);
            var /= accs.size();
            rows.push_back({set, sp, mean, std::sqrt(var)});
        }
    }
    return rows;
}

enum class DistortionKind { identity, rotate90, rotate180, flipud };

inline const char* distortion_name(DistortionKind k) {
    switch (k) {
        case DistortionKind::identity: return "identity";
        case DistortionKind::rotate90: return "rot90";
        case DistortionKind::rotate180: return "rot180";
        case DistortionKind::flipud: return "flip_ud";
    }
    return "?";
}

template <typename T>
Tensor<T> apply_distortion(const Tensor<T>& x, DistortionKind k) {
    switch (k) {
        case DistortionKind::identity: return x;
        case DistortionKind::rotate90: return rot90(x);
        case DistortionKind::rotate180: return rot180(x);
        case DistortionKind::flipud: return flip_ud(x);
    }
    return x;
}

struct DistortionRow {
    DistortionKind kind = DistortionKind::identity;
    double accuracy = 0.0;
};

/// Accuracy under each rotational distortion applied to every eval image.
template <typename T>
std::vector<DistortionRow> distortion_eval(Model<T>& model, const Dataset<T>& data, int batch = 128) {
    std::vector<DistortionRow> rows;
    for (DistortionKind k : {DistortionKind::identity, DistortionKind::rotate90,
                             DistortionKind::rotate180, DistortionKind::flipud}) {
        Dataset<T> transformed;
        transformed.class_count = data.class_count;
        transformed.labels = data.labels;
        transformed.images = apply_distortion(data.images, k);
        rows.push_back({k, evaluate_accuracy(model, transformed, batch)});
    }
    return rows;
}

}  // namespace acnet

#endif
