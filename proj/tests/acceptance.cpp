// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// fatal criterion fails. The accuracy-direction comparison in criterion 5
// is reported but not fatal; the fused-vs-unfused prediction equality in
// the same criterion is fatal.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "acnet/analysis.hpp"
#include "acnet/fusion.hpp"
#include "acnet/serialize.hpp"
#include "acnet/train.hpp"
#include "grad_checks.hpp"
#include "test_util.hpp"

using namespace acnet;
using namespace testutil;

namespace {

struct Criterion {
    int id;
    std::string name;
    bool pass;
    bool fatal;
    std::string detail;
};

std::vector<Criterion> g_results;

void report(int id, const std::string& name, bool pass, const std::string& detail,
            bool fatal = true) {
    g_results.push_back({id, name, pass, fatal, detail});
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const char* kToySpec =
    "input 1 16 16\n"
    "conv 8 3x3 stride 1 pad 1 acb\n"
    "relu\n"
    "maxpool 2 2\n"
    "conv 16 3x3 stride 1 pad 1 acb\n"
    "relu\n"
    "maxpool 2 2\n"
    "conv 32 3x3 stride 1 pad 1 acb\n"
    "relu\n"
    "gap\n"
    "linear 4\n";

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::scientific << std::setprecision(2) << v;
    return ss.str();
}

std::string fmt_f(double v, int prec = 4) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(prec) << v;
    return ss.str();
}

// ---- criterion 1 (+ the trained models criterion 6 reuses) ----

struct TrainedToyNets {
    std::vector<Model<float>> fused;  // trained-and-fused, one per seed
    int count = 0;
};

TrainedToyNets criterion_1_fusion_equivalence() {
    const auto t0 = std::chrono::steady_clock::now();
    ModelSpec spec = parse_model_spec(kToySpec);
    double worst32 = 0.0, worst64 = 0.0;
    bool all_pass = true;

    auto check_both = [&](Model<float>& m, std::uint64_t seed) {
        Model<float> fused = fuse_model(m);
        EquivalenceReport r32 = verify_equivalence(m, fused, 200, seed);
        Model<double> m64 = convert_model<double>(m);
        Model<double> fused64 = fuse_model(m64);
        EquivalenceReport r64 = verify_equivalence(m64, fused64, 200, seed);
        worst32 = std::max(worst32, r32.max_rel);
        worst64 = std::max(worst64, r64.max_rel);
        all_pass = all_pass && r32.pass && r64.pass;
        return fused;
    };

    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Model<float> m = expand_to_acnet<float>(spec, Ablation{}, BuildOptions{.seed = seed});
        if (seed > 10) {
            // second half: random running statistics instead of the fresh (0,1)
            Rng rng(seed * 977);
            for_each_array(m, [&](const char* name, std::vector<float>& arr) {
                const std::string n = name;
                if (n == "running_mean")
                    for (auto& v : arr) v = static_cast<float>(rng.uniform(-0.5, 0.5));
                else if (n == "running_var")
                    for (auto& v : arr) v = static_cast<float>(rng.uniform(0.4, 2.5));
            });
        }
        check_both(m, seed);
    }

    TrainedToyNets trained;
    Dataset<float> small = gen_synthetic<float>(1200, 0xc0ffeeull, 16, 4);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 64;
    cfg.schedule = {{0, 0.1}, {2, 0.01}};
    for (int seed = 0; seed < 5; ++seed) {
        cfg.seed = static_cast<std::uint64_t>(100 + seed);
        Model<float> m =
            expand_to_acnet<float>(spec, Ablation{}, BuildOptions{.seed = cfg.seed});
        train_model(m, small, cfg);
        trained.fused.push_back(check_both(m, cfg.seed));
        trained.count++;
    }

    const double secs = seconds_since(t0);
    const bool ok = all_pass && secs <= 120.0;
    report(1, "fusion-equivalence",
           ok,
           "20 random + " + std::to_string(trained.count) + " trained nets; max_rel32 " +
               fmt(worst32) + " (tol 1e-4), max_rel64 " + fmt(worst64) + " (tol 1e-9), " +
               fmt_f(secs, 1) + "s (limit 120s)");
    return trained;
}

// ---- criterion 2 ----

void criterion_2_additivity() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(20240);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int c = 1 + static_cast<int>(rng.next_index(3));
        const int d = 1 + static_cast<int>(rng.next_index(3));
        const int h = 4 + static_cast<int>(rng.next_index(4));
        const int w = 4 + static_cast<int>(rng.next_index(4));
        Tensor<double> x = random_tensor<double>(1, c, h, w, rng);
        FilterBank<double> sq = random_bank<double>(d, c, 3, 3, rng);
        FilterBank<double> hb = random_bank<double>(d, c, 1, 3, rng);
        FilterBank<double> vb = random_bank<double>(d, c, 3, 1, rng);

        Tensor<double> sum = conv2d(x, sq, ConvGeometry(1, 1, 1, 1));
        add_into(sum, conv2d(x, hb, ConvGeometry(1, 1, 0, 1)));
        add_into(sum, conv2d(x, vb, ConvGeometry(1, 1, 1, 0)));

        FilterBank<double> merged = sq;
        for (int id = 0; id < d; ++id)
            for (int ic = 0; ic < c; ++ic) {
                for (int q = 0; q < 3; ++q) merged.at(id, ic, 1, q) += hb.at(id, ic, 0, q);
                for (int r = 0; r < 3; ++r) merged.at(id, ic, r, 1) += vb.at(id, ic, r, 0);
            }
        Tensor<double> one = conv2d(x, merged, ConvGeometry(1, 1, 1, 1));

        // ulps measured at the separate-route summand envelope
        Tensor<double> xabs = x;
        for (auto& v : xabs.data) v = std::abs(v);
        auto abs_bank = [](FilterBank<double> b) {
            for (auto& v : b.weights) v = std::abs(v);
            return b;
        };
        Tensor<double> env = conv2d(xabs, abs_bank(sq), ConvGeometry(1, 1, 1, 1));
        add_into(env, conv2d(xabs, abs_bank(hb), ConvGeometry(1, 1, 0, 1)));
        add_into(env, conv2d(xabs, abs_bank(vb), ConvGeometry(1, 1, 1, 0)));
        for (size_t i = 0; i < sum.data.size(); ++i)
            worst = std::max(worst, ulp_distance(sum.data[i], one.data[i], env.data[i]));
    }
    report(2, "additivity-property", worst <= 8.0,
           "1000 tuples, worst " + fmt_f(worst, 2) + " ulps (limit 8), " +
               fmt_f(seconds_since(t0), 1) + "s");
}

// ---- criterion 3 ----

void criterion_3_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::string worst_name = "-";
    for (const GradCheckResult& r : run_op_gradient_checks()) {
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_name = r.name;
        }
    }
    GradCheckResult full = run_acb_model_gradient_check();
    if (full.max_rel_err > worst) {
        worst = full.max_rel_err;
        worst_name = full.name;
    }
    const double secs = seconds_since(t0);
    report(3, "gradient-correctness", worst <= 1e-4 && secs <= 60.0,
           "worst rel err " + fmt(worst) + " at " + worst_name + " (tol 1e-4), " + fmt_f(secs, 1) +
               "s (limit 60s)");
}

// ---- criterion 4 ----

void criterion_4_train_eval_gap() {
    ModelSpec spec = parse_model_spec("input 1 8 8\nconv 4 3x3 stride 1 pad 1 acb\ngap\nlinear 2\n");
    Model<float> m = expand_to_acnet<float>(spec, Ablation{}, BuildOptions{.seed = 7});
    Model<float> fused = fuse_model(m);
    Rng rng(99);
    Tensor<float> x(32, 1, 8, 8);
    // batch mean sits ~2 above the running mean of 0
    for (auto& v : x.data) v = static_cast<float>(2.0 + rng.normal());
    Tensor<float> train_out = m.forward(x, RunMode::train);
    Tensor<float> fused_out = fused.forward(x, RunMode::eval);
    const double gap = max_abs_diff(train_out, fused_out);
    report(4, "train-eval-nonequivalence", gap > 1e-2,
           "offset batch train-vs-fused max dev " + fmt(gap) + " (must exceed 1e-2)");
}

// ---- criterion 5 (returns the seed-0 fused ACNet for criterion 7) ----

struct AccuracyRun {
    Model<float> fused_seed0;
    Dataset<float> eval_set;
    bool have_model = false;
};

AccuracyRun criterion_5_accuracy_direction() {
    const auto t0 = std::chrono::steady_clock::now();
    ModelSpec spec = parse_model_spec(kToySpec);
    Dataset<float> train = gen_synthetic<float>(4000, 0x1ea5ull, 16, 4);
    Dataset<float> eval = gen_synthetic<float>(1000, 0x7e57ull, 16, 4);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 64;
    cfg.schedule = {{0, 0.1}, {4, 0.01}};

    AccuracyRun out;
    out.eval_set = eval;
    double acnet_mean = 0.0, plain_mean = 0.0;
    bool preds_equal = true;
    int pred_diffs_total = 0;
    std::string per_seed;
    for (int seed = 0; seed < 5; ++seed) {
        cfg.seed = static_cast<std::uint64_t>(seed);
        Model<float> acnet =
            expand_to_acnet<float>(spec, Ablation{}, BuildOptions{.seed = cfg.seed});
        std::vector<TrainLogRow> la = train_model(acnet, train, &eval, cfg);
        Model<float> plain = expand_to_acnet<float>(override_blocks(spec, "off"), Ablation{},
                                                    BuildOptions{.seed = cfg.seed});
        std::vector<TrainLogRow> lp = train_model(plain, train, &eval, cfg);
        acnet_mean += la.back().eval_acc;
        plain_mean += lp.back().eval_acc;
        per_seed += (seed ? " " : "") + fmt_f(la.back().eval_acc, 3) + "/" +
                    fmt_f(lp.back().eval_acc, 3);

        Model<float> fused = fuse_model(acnet);
        std::vector<int> pa = argmax_classes(acnet.forward(eval.images, RunMode::eval));
        std::vector<int> pb = argmax_classes(fused.forward(eval.images, RunMode::eval));
        for (size_t i = 0; i < pa.size(); ++i)
            if (pa[i] != pb[i]) ++pred_diffs_total;
        preds_equal = preds_equal && (pa == pb);
        if (seed == 0) {
            out.fused_seed0 = std::move(fused);
            out.have_model = true;
        }
    }
    acnet_mean /= 5;
    plain_mean /= 5;
    const double secs = seconds_since(t0);

    report(5, "fused-predictions-identical", preds_equal && secs <= 900.0,
           std::to_string(pred_diffs_total) + " prediction diffs over 5 seeds x 1000 images, " +
               fmt_f(secs, 1) + "s (limit 900s)");
    report(5, "accuracy-direction", acnet_mean >= plain_mean - 0.005,
           "acnet mean " + fmt_f(acnet_mean) + " vs plain mean " + fmt_f(plain_mean) +
               " (soft bound: acnet >= plain - 0.005); per-seed acnet/plain: " + per_seed,
           /*fatal=*/false);
    return out;
}

// ---- criterion 6 ----

void criterion_6_skeleton_dominance(TrainedToyNets& nets) {
    int wins = 0;
    std::string detail;
    for (int i = 0; i < nets.count; ++i) {
        MagnitudeMatrix a = magnitude_matrix(nets.fused[static_cast<size_t>(i)]);
        const double sk = a.mean_over(location_cells(LocationSet::skeleton));
        const double co = a.mean_over(location_cells(LocationSet::corners));
        if (sk > co) ++wins;
        detail += (i ? " " : "") + fmt_f(sk, 3) + ">" + fmt_f(co, 3);
    }
    report(6, "skeleton-dominance", wins >= 4,
           std::to_string(wins) + "/5 seeds with mean A(skeleton) > mean A(corners); " + detail);
}

// ---- criterion 7 ----

void criterion_7_pruning_order(AccuracyRun& run) {
    if (!run.have_model) {
        report(7, "pruning-sweep-order", false, "no trained model available");
        return;
    }
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::vector<SweepRow> rows =
        sparsity_sweep(run.fused_seed0, {LocationSet::corners, LocationSet::skeleton},
                       {0.1, 0.2, 0.3, 0.4}, seeds, run.eval_set);
    bool order_ok = true;
    std::string detail;
    for (int i = 0; i < 4; ++i) {
        const SweepRow& corner = rows[static_cast<size_t>(i)];
        const SweepRow& skeleton = rows[static_cast<size_t>(4 + i)];
        if (corner.mean_acc < skeleton.mean_acc) order_ok = false;
        detail += (i ? " " : "") + fmt_f(corner.sparsity, 1) + ":" + fmt_f(corner.mean_acc, 3) +
                  ">=" + fmt_f(skeleton.mean_acc, 3);
    }

    // saturation: the 4/9 corner point zeroes every corner weight
    Model<float> saturated = prune_by_location(run.fused_seed0, LocationSet::corners, 4.0 / 9.0, 9);
    bool corners_zero = true;
    for (auto& layer : saturated.layers) {
        if (std::string(layer->kind()) != "conv") continue;
        auto& conv = static_cast<Conv2dLayer<float>&>(*layer);
        if (conv.kh != 3) continue;
        for (int j = 0; j < conv.d; ++j)
            for (int ic = 0; ic < conv.c; ++ic)
                for (auto [r, q] : location_cells(LocationSet::corners))
                    if (conv.at(j, ic, r, q) != 0.0f) corners_zero = false;
    }
    report(7, "pruning-sweep-order", order_ok && corners_zero,
           "corner >= skeleton mean acc at {10,20,30,40}%: " + detail +
               (corners_zero ? "; 4/9 corner point saturates" : "; corner saturation FAILED"));
}

// ---- criterion 8 ----

void criterion_8_distortion(AccuracyRun& run) {
    // exact identity on the eval images
    const Tensor<float>& imgs = run.eval_set.images;
    const bool rot_identity = bit_identical(rot180(imgs), flip_ud(flip_lr(imgs)));

    // bitwise flip commutation of a 1x3 bank under padding (0,1)
    Rng rng(515);
    FilterBank<float> hb = random_bank<float>(3, 1, 1, 3, rng);
    ConvGeometry hg(1, 1, 0, 1);
    Tensor<float> probe(8, 1, 16, 16);
    std::copy_n(imgs.data.begin(), probe.data.size(), probe.data.begin());
    const bool commute =
        bit_identical(flip_ud(conv2d(probe, hb, hg)), conv2d(flip_ud(probe), hb, hg));

    // qualitative: flip-augmented training gives matched rot180/flip_ud
    // accuracy. Uses the flip-symmetric stripe orientations (0 and 90
    // degrees): a left-right flip must be label-compatible for flip
    // augmentation to induce the robustness the check relies on, and with
    // four evenly spaced orientations flipping aliases the diagonal classes.
    std::string spec2 = kToySpec;
    spec2.replace(spec2.find("linear 4"), 8, "linear 2");
    ModelSpec spec = parse_model_spec(spec2);
    Dataset<float> train = gen_synthetic<float>(4000, 0x1ea5ull, 16, 2);
    Dataset<float> eval2 = gen_synthetic<float>(1000, 0x7e57ull, 16, 2);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 64;
    cfg.schedule = {{0, 0.1}, {4, 0.01}};
    cfg.seed = 11;
    cfg.use_augment = true;
    cfg.augment = AugmentConfig{.pad_to = 18, .crop = 16, .flip_prob = 0.5};
    Model<float> m = expand_to_acnet<float>(spec, Ablation{}, BuildOptions{.seed = 11});
    train_model(m, train, cfg);
    std::vector<DistortionRow> rows = distortion_eval(m, eval2);
    const double gap = std::abs(rows[2].accuracy - rows[3].accuracy);

    report(8, "distortion-identities", rot_identity && commute && gap <= 0.01,
           std::string("rot180==flipud.fliplr ") + (rot_identity ? "exact" : "FAILED") +
               "; 1x3 flip-commutation " + (commute ? "bitwise" : "FAILED") + "; rot180 " +
               fmt_f(rows[2].accuracy, 3) + " vs flip_ud " + fmt_f(rows[3].accuracy, 3) + " gap " +
               fmt_f(gap, 4) + " (limit 0.01)");
}

// ---- criterion 9 ----

void criterion_9_serialization(AccuracyRun& run) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "acnet_acceptance";
    fs::create_directories(dir);

    bool roundtrip_ok = true;
    if (run.have_model) {
        const std::string path = (dir / "model.acm").string();
        save_model(run.fused_seed0, path);
        Model<float> back = load_model<float>(path);
        std::vector<std::vector<float>*> a, b;
        for_each_array(run.fused_seed0, [&](const char*, std::vector<float>& v) { a.push_back(&v); });
        for_each_array(back, [&](const char*, std::vector<float>& v) { b.push_back(&v); });
        for (size_t i = 0; i < a.size() && roundtrip_ok; ++i)
            roundtrip_ok = std::memcmp(a[i]->data(), b[i]->data(), a[i]->size() * sizeof(float)) == 0;
    }

    // identical seeds give bit-identical training outcomes
    ModelSpec spec = parse_model_spec(
        "input 1 8 8\nconv 4 3x3 stride 1 pad 1 acb\nrelu\nmaxpool 2 2\ngap\nlinear 4\n");
    Dataset<float> small = gen_synthetic<float>(512, 3, 8, 4);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 32;
    cfg.seed = 5;
    cfg.schedule = {{0, 0.05}};
    auto run_once = [&]() {
        Model<float> m = expand_to_acnet<float>(spec, Ablation{}, BuildOptions{.seed = 5});
        train_model(m, small, cfg);
        std::vector<float> flat;
        for_each_array(m, [&](const char*, std::vector<float>& v) {
            flat.insert(flat.end(), v.begin(), v.end());
        });
        return flat;
    };
    const std::vector<float> w1 = run_once(), w2 = run_once();
    const bool train_deterministic =
        w1.size() == w2.size() && std::memcmp(w1.data(), w2.data(), w1.size() * sizeof(float)) == 0;

    // CIFAR-10 loader: synthesized 10-record file parses, truncated rejected
    const std::string cpath = (dir / "cifar.bin").string();
    {
        std::ofstream f(cpath, std::ios::binary | std::ios::trunc);
        for (int rec = 0; rec < 10; ++rec) {
            f.put(static_cast<char>(rec % 10));
            for (int p = 0; p < 3072; ++p) f.put(static_cast<char>((rec + p) % 256));
        }
    }
    bool cifar_ok = false;
    try {
        Dataset<float> d = load_cifar10_binary<float>({cpath});
        cifar_ok = d.size() == 10 && d.labels[9] == 9;
    } catch (const std::exception&) {
    }
    bool truncated_rejected = false;
    {
        std::ifstream f(cpath, std::ios::binary);
        std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        blob.resize(blob.size() - 100);
        std::ofstream g((dir / "cifar_trunc.bin").string(), std::ios::binary | std::ios::trunc);
        g.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        g.close();
        try {
            load_cifar10_binary<float>({(dir / "cifar_trunc.bin").string()});
        } catch (const std::exception&) {
            truncated_rejected = true;
        }
    }
    fs::remove_all(dir);

    report(9, "serialization-and-determinism",
           roundtrip_ok && train_deterministic && cifar_ok && truncated_rejected,
           std::string("round-trip ") + (roundtrip_ok ? "bit-exact" : "FAILED") +
               "; repeated seeded training " + (train_deterministic ? "bit-identical" : "FAILED") +
               "; cifar parse " + (cifar_ok ? "ok" : "FAILED") + "; truncation " +
               (truncated_rejected ? "rejected" : "ACCEPTED"));
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    TrainedToyNets trained = criterion_1_fusion_equivalence();
    criterion_2_additivity();
    criterion_3_gradients();
    criterion_4_train_eval_gap();
    AccuracyRun run = criterion_5_accuracy_direction();
    criterion_6_skeleton_dominance(trained);
    criterion_7_pruning_order(run);
    criterion_8_distortion(run);
    criterion_9_serialization(run);

    bool fatal_failure = false;
    for (const Criterion& c : g_results) {
        const char* tag = c.pass ? (c.fatal ? "PASS" : "SOFT-PASS") : (c.fatal ? "FAIL" : "SOFT-FAIL");
        std::printf("[%s] criterion %d %s: %s\n", tag, c.id, c.name.c_str(), c.detail.c_str());
        if (!c.pass && c.fatal) fatal_failure = true;
    }
    std::printf("total runtime %.1fs\n", seconds_since(t0));
    return fatal_failure ? 1 : 0;
}
