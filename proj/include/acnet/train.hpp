#ifndef ACNET_TRAIN_HPP
#define ACNET_TRAIN_HPP

#include <functional>
#include <numeric>

#include "acnet/data.hpp"
#include "acnet/model.hpp"

namespace acnet {

struct LrPoint {
    int epoch = 0;
    double rate = 0.1;
};

struct TrainConfig {
    std::vector<LrPoint> schedule{{0, 0.1}};  // staircase; entry applies from its epoch on
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int batch_size = 64;
    int epochs = 1;
    std::uint64_t seed = 0;
    AugmentConfig augment;
    bool use_augment = false;

    void validate() const {
        if (epochs < 1) fail_invalid("TrainConfig: epochs must be positive");
        if (batch_size < 1) fail_invalid("TrainConfig: batch size must be positive");
        if (schedule.empty()) fail_invalid("TrainConfig: empty learning-rate schedule");
        for (const auto& p : schedule)
            if (!(p.rate > 0)) fail_invalid("TrainConfig: learning rates must be positive");
    }
};

inline double lr_at(const TrainConfig& cfg, int epoch) {
    double lr = cfg.schedule.front().rate;
    for (const auto& p : cfg.schedule)
        if (p.epoch <= epoch) lr = p.rate;
    return lr;
}

/// Momentum SGD with decoupled weight decay:
///   v <- m*v + g;  theta <- theta - lr*(v + decay*theta);  g <- 0.
template <typename T>
class SgdOptimizer {
public:
    explicit SgdOptimizer(const std::vector<Param<T>*>& params) {
        velocity_.reserve(params.size());
        for (const Param<T>* p : params) velocity_.emplace_back(p->value.size(), T(0));
    }

    void step(const std::vector<Param<T>*>& params, double lr, double momentum, double decay) {
        if (params.size() != velocity_.size()) fail_invalid("SgdOptimizer: parameter set changed");
        for (size_t pi = 0; pi < params.size(); ++pi) {
            Param<T>& p = *params[pi];
            std::vector<T>& v = velocity_[pi];
            for (size_t i = 0; i < p.value.size(); ++i) {
                v[i] = static_cast<T>(momentum) * v[i] + p.grad[i];
                p.value[i] -= static_cast<T>(lr) * (v[i] + static_cast<T>(decay) * p.value[i]);
                p.grad[i] = T(0);
            }
        }
    }

private:
    std::vector<std::vector<T>> velocity_;
};

template <typename T>
double evaluate_accuracy(Model<T>& model, const Dataset<T>& data, int batch = 128) {
    if (data.size() == 0) return 0.0;
    int correct = 0;
    for (int start = 0; start < data.size(); start += batch) {
        const int bn = std::min(batch, data.size() - start);
        std::vector<int> idx(static_cast<size_t>(bn));
        std::iota(idx.begin(), idx.end(), start);
        Dataset<T> b = gather(data, idx);
        Tensor<T> logits = model.forward(b.images, RunMode::eval);
        std::vector<int> pred = argmax_classes(logits);
        for (int i = 0; i < bn; ++i)
            if (pred[static_cast<size_t>(i)] == b.labels[static_cast<size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / data.size();
}

struct TrainLogRow {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double eval_acc = 0.0;
};

/// Seeded epoch loop: shuffle, optional augmentation, forward, softmax
/// cross-entropy, backward, SGD step. Identical config + seed reproduces
/// the final weights bit-for-bit.
template <typename T>
std::vector<TrainLogRow> train_model(Model<T>& model, const Dataset<T>& train_set,
                                     const Dataset<T>* eval_set, const TrainConfig& cfg) {
    cfg.validate();
    train_set.validate();
    Rng rng(cfg.seed ^ 0x7a17ull);
    std::vector<Param<T>*> params = model.params();
    SgdOptimizer<T> opt(params);
    std::vector<int> order(static_cast<size_t>(train_set.size()));
    std::iota(order.begin(), order.end(), 0);
    std::vector<TrainLogRow> log;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(cfg, epoch);
        rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        int batches = 0;
        for (int start = 0; start < train_set.size(); start += cfg.batch_size) {
            const int bn = std::min(cfg.batch_size, train_set.size() - start);
            std::vector<int> idx(order.begin() + start, order.begin() + start + bn);
            Dataset<T> batch = gather(train_set, idx);
            Tensor<T> images =
                cfg.use_augment ? augment(batch.images, cfg.augment, rng) : batch.images;
            Tensor<T> logits = model.forward(images, RunMode::train);
            SoftmaxXentResult<T> xent = softmax_xent(logits, batch.labels);
            model.backward(xent.dlogits);
            opt.step(params, lr, cfg.momentum, cfg.weight_decay);
            loss_sum += xent.loss;
            ++batches;
        }
        TrainLogRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_loss = batches > 0 ? loss_sum / batches : 0.0;
        row.eval_acc = eval_set ? evaluate_accuracy(model, *eval_set) : 0.0;
        log.push_back(row);
    }
    return log;
}

template <typename T>
std::vector<TrainLogRow> train_model(Model<T>& model, const Dataset<T>& train_set,
                                     const TrainConfig& cfg) {
    return train_model(model, train_set, static_cast<const Dataset<T>*>(nullptr), cfg);
}

/// Central-difference gradient check for one parameter: compares p.grad
/// (already populated by a backward pass) against (f(x+h)-f(x-h))/2h on up
/// to max_coords sampled coordinates. Relative error uses a 1e-3 floor so
/// near-zero gradient pairs are compared on an absolute scale. 64-bit only.
inline double finite_diff_check(Param<double>& p, const std::function<double()>& loss_fn, double h,
                                int max_coords = 64, std::uint64_t seed = 17) {
    std::vector<size_t> coords;
    if (static_cast<int>(p.value.size()) <= max_coords) {
        coords.resize(p.value.size());
        std::iota(coords.begin(), coords.end(), size_t{0});
    } else {
        Rng rng(seed);
        for (int i = 0; i < max_coords; ++i)
            coords.push_back(static_cast<size_t>(rng.next_index(static_cast<std::int64_t>(p.value.size()))));
    }
    double worst = 0.0;
    for (size_t ci : coords) {
        const double saved = p.value[ci];
        p.value[ci] = saved + h;
        const double lp = loss_fn();
        p.value[ci] = saved - h;
        const double lm = loss_fn();
        p.value[ci] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double g = p.grad[ci];
        const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-3});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace acnet

#endif
