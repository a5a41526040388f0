// Batch driver for the train -> fuse -> verify -> analyze pipeline.
// Exit codes: 0 success, 1 precondition/IO failure, 2 verification failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "acnet/analysis.hpp"
#include "acnet/fusion.hpp"
#include "acnet/serialize.hpp"
#include "acnet/train.hpp"

using namespace acnet;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<LrPoint> parse_schedule(const std::string& text) {
    std::vector<LrPoint> schedule;
    for (const std::string& part : split(text, ',')) {
        const auto kv = split(part, ':');
        if (kv.size() != 2) fail_invalid("bad --lr entry '" + part + "', expected epoch:rate");
        schedule.push_back({std::stoi(kv[0]), std::stod(kv[1])});
    }
    return schedule;
}

AugmentConfig parse_augment(const std::string& text, bool& enabled) {
    AugmentConfig cfg;
    enabled = false;
    if (text.empty() || text == "none") return cfg;
    for (const std::string& part : split(text, ',')) {
        const auto kv = split(part, '=');
        if (kv.size() != 2) fail_invalid("bad --augment entry '" + part + "'");
        if (kv[0] == "pad")
            cfg.pad_to = std::stoi(kv[1]);
        else if (kv[0] == "crop")
            cfg.crop = std::stoi(kv[1]);
        else if (kv[0] == "flip")
            cfg.flip_prob = std::stod(kv[1]);
        else
            fail_invalid("unknown --augment key '" + kv[0] + "'");
    }
    enabled = true;
    return cfg;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_runtime("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct DataArgs {
    std::string source = "synthetic";
    std::uint64_t seed = 0;
    int train_n = 4000;
    int eval_n = 1000;
    int classes = 4;
    int image_size = 16;
    double eval_frac = 0.2;
    bool cifar_normalize = false;
};

template <typename T>
struct DataPair {
    Dataset<T> train;
    Dataset<T> eval;
};

template <typename T>
DataPair<T> load_data(const DataArgs& a) {
    DataPair<T> out;
    if (a.source == "synthetic") {
        out.train = gen_synthetic<T>(a.train_n, a.seed ^ 0x7261696eull, a.image_size, a.classes);
        out.eval = gen_synthetic<T>(a.eval_n, a.seed ^ 0x6576616cull, a.image_size, a.classes);
    } else if (a.source.rfind("synthetic:", 0) == 0) {
        Dataset<T> all = load_dataset<T>(a.source.substr(10));
        const int eval_n = std::max(1, static_cast<int>(all.size() * a.eval_frac));
        const int train_n = all.size() - eval_n;
        if (train_n < 1) fail_invalid("dataset too small to split");
        std::vector<int> idx(static_cast<size_t>(train_n));
        std::iota(idx.begin(), idx.end(), 0);
        out.train = gather(all, idx);
        idx.resize(static_cast<size_t>(eval_n));
        std::iota(idx.begin(), idx.end(), train_n);
        out.eval = gather(all, idx);
    } else if (a.source.rfind("cifar10:", 0) == 0) {
        const std::string dir = a.source.substr(8);
        std::vector<std::string> train_paths;
        for (int i = 1; i <= 5; ++i)
            train_paths.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
        out.train = load_cifar10_binary<T>(train_paths, a.cifar_normalize);
        out.eval = load_cifar10_binary<T>({dir + "/test_batch.bin"}, a.cifar_normalize);
    } else {
        fail_invalid("unknown --data source '" + a.source +
                     "' (use synthetic, synthetic:<file> or cifar10:<dir>)");
    }
    return out;
}

void add_data_flags(CLI::App* cmd, DataArgs& a) {
    cmd->add_option("--data", a.source, "synthetic | synthetic:<file> | cifar10:<dir>");
    cmd->add_option("--data-seed", a.seed, "synthetic data seed (train defaults it to --seed)");
    cmd->add_option("--train-n", a.train_n, "synthetic training samples");
    cmd->add_option("--eval-n", a.eval_n, "synthetic eval samples");
    cmd->add_option("--classes", a.classes, "synthetic class count");
    cmd->add_option("--image-size", a.image_size, "synthetic image extent");
    cmd->add_option("--eval-frac", a.eval_frac, "eval fraction for synthetic:<file>");
    cmd->add_flag("--cifar-normalize", a.cifar_normalize, "per-channel mean/std normalization");
}

struct TrainArgs {
    std::string spec_path;
    std::string acb = "on";
    bool no_horizontal = false;
    bool no_vertical = false;
    bool bn_post_sum = false;
    std::uint64_t seed = 0;
    int epochs = 10;
    int batch = 64;
    std::string lr = "0:0.1,6:0.01,8:0.001";
    double momentum = 0.9;
    double decay = 1e-4;
    std::string augment = "none";
    std::string precision = "f32";
    std::string out;
    std::string log_path;
    DataArgs data;
};

template <typename T>
int cmd_train(const TrainArgs& a) {
    ModelSpec spec = override_blocks(parse_model_spec(read_text_file(a.spec_path)), a.acb);
    Ablation ablation;
    ablation.use_horizontal = !a.no_horizontal;
    ablation.use_vertical = !a.no_vertical;
    ablation.bn_in_branch = !a.bn_post_sum;

    DataPair<T> data = load_data<T>(a.data);

    TrainConfig cfg;
    cfg.schedule = parse_schedule(a.lr);
    cfg.momentum = a.momentum;
    cfg.weight_decay = a.decay;
    cfg.batch_size = a.batch;
    cfg.epochs = a.epochs;
    cfg.seed = a.seed;
    cfg.augment = parse_augment(a.augment, cfg.use_augment);

    Model<T> model = expand_to_acnet<T>(spec, ablation, BuildOptions{.seed = a.seed});
    std::vector<TrainLogRow> log = train_model(model, data.train, &data.eval, cfg);
    for (const TrainLogRow& r : log)
        std::cout << "epoch " << r.epoch << " lr " << r.lr << " loss " << std::setprecision(6)
                  << r.train_loss << " eval-acc " << r.eval_acc << "\n";

    save_model(model, a.out);
    std::cout << "saved " << a.out << "\n";
    if (!a.log_path.empty()) {
        std::ofstream csv(a.log_path, std::ios::trunc);
        if (!csv) fail_runtime("cannot write " + a.log_path);
        csv << "epoch,lr,train_loss,eval_acc\n" << std::setprecision(10);
        for (const TrainLogRow& r : log)
            csv << r.epoch << "," << r.lr << "," << r.train_loss << "," << r.eval_acc << "\n";
    }
    return 0;
}

template <typename T>
int cmd_fuse(Model<T>& model, const std::string& out_path) {
    Model<T> fused = fuse_model(model);
    std::cout << "layer,kind,max_abs_deviation\n";
    for (const LayerDeviation& row : fusion_layer_report(model, fused, 8, 1))
        std::cout << row.index << "," << row.kind << "," << std::scientific << std::setprecision(3)
                  << row.max_abs << "\n";
    save_model(fused, out_path);
    std::cout << "saved " << out_path << "\n";
    return 0;
}

template <typename T>
int cmd_verify(Model<T>& a, Model<T>& b, int n, std::uint64_t seed, double tolerance) {
    EquivalenceReport rep = tolerance > 0 ? verify_equivalence(a, b, n, seed, tolerance)
                                          : verify_equivalence(a, b, n, seed);
    std::cout << std::scientific << std::setprecision(6);
    std::cout << "inputs=" << rep.inputs << "\n"
              << "max_abs=" << rep.max_abs << "\n"
              << "max_rel=" << rep.max_rel << "\n"
              << "tolerance=" << rep.tolerance << "\n"
              << "pass=" << (rep.pass ? "true" : "false") << "\n";
    return rep.pass ? 0 : 2;
}

template <typename T>
int cmd_magnitude(Model<T>& model, const std::string& out_csv) {
    MagnitudeMatrix m = magnitude_matrix(model);
    std::cout << "average kernel magnitude matrix over " << m.layer_count << " layers:\n"
              << std::fixed << std::setprecision(3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) std::cout << m.at(r, c) << (c == 2 ? "\n" : " ");
    if (!out_csv.empty()) {
        std::ofstream csv(out_csv, std::ios::trunc);
        if (!csv) fail_runtime("cannot write " + out_csv);
        csv << "a00,a01,a02,a10,a11,a12,a20,a21,a22\n" << std::setprecision(10);
        for (int i = 0; i < 9; ++i) csv << m.a[static_cast<size_t>(i)] << (i == 8 ? "\n" : ",");
    }
    return 0;
}

template <typename T>
int cmd_prune_sweep(Model<T>& model, const std::string& sets_text, const std::string& grid_text,
                    int seeds, std::uint64_t seed_base, const DataArgs& data_args,
                    const std::string& out_csv) {
    std::vector<LocationSet> sets;
    for (const std::string& name : split(sets_text, ',')) sets.push_back(parse_location_set(name));
    std::vector<double> grid;
    for (const std::string& v : split(grid_text, ',')) grid.push_back(std::stod(v));
    std::vector<std::uint64_t> seed_list;
    for (int i = 0; i < seeds; ++i) seed_list.push_back(seed_base + static_cast<std::uint64_t>(i));

    DataPair<T> data = load_data<T>(data_args);
    std::vector<SweepRow> rows = sparsity_sweep(model, sets, grid, seed_list, data.eval);

    std::ostringstream csv;
    csv << "set,sparsity,mean_acc,std_acc\n" << std::setprecision(10);
    for (const SweepRow& r : rows)
        csv << location_set_name(r.set) << "," << r.sparsity << "," << r.mean_acc << ","
            << r.std_acc << "\n";
    std::cout << csv.str();
    if (!out_csv.empty()) {
        std::ofstream f(out_csv, std::ios::trunc);
        if (!f) fail_runtime("cannot write " + out_csv);
        f << csv.str();
    }
    return 0;
}

template <typename T>
int cmd_distort_eval(Model<T>& model, const DataArgs& data_args, const std::string& out_csv) {
    DataPair<T> data = load_data<T>(data_args);
    std::vector<DistortionRow> rows = distortion_eval(model, data.eval);
    std::ostringstream csv;
    csv << "transform,accuracy\n" << std::setprecision(10);
    for (const DistortionRow& r : rows) csv << distortion_name(r.kind) << "," << r.accuracy << "\n";
    std::cout << csv.str();
    if (!out_csv.empty()) {
        std::ofstream f(out_csv, std::ios::trunc);
        if (!f) fail_runtime("cannot write " + out_csv);
        f << csv.str();
    }
    return 0;
}

template <typename Fn>
int with_loaded_model(const std::string& path, Fn&& fn) {
    LoadedModel any = load_model_any(path);
    if (any.precision == Precision::f32) return fn(any.f32());
    return fn(any.f64());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"asymmetric convolution blocks: train, fuse, verify, analyze"};
    app.require_subcommand(1);

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train a model from a spec file");
    train->add_option("--spec", train_args.spec_path, "model spec file")->required();
    train->add_option("--acb", train_args.acb, "on | off | shifted")
        ->check(CLI::IsMember({"on", "off", "shifted"}));
    train->add_flag("--no-horizontal", train_args.no_horizontal, "drop the 1x3 branches");
    train->add_flag("--no-vertical", train_args.no_vertical, "drop the 3x1 branches");
    train->add_flag("--bn-post-sum", train_args.bn_post_sum, "one BN after the branch sum");
    train->add_option("--seed", train_args.seed, "rng seed");
    train->add_option("--epochs", train_args.epochs, "training epochs");
    train->add_option("--batch", train_args.batch, "batch size");
    train->add_option("--lr", train_args.lr, "staircase schedule epoch:rate[,epoch:rate...]");
    train->add_option("--momentum", train_args.momentum, "sgd momentum");
    train->add_option("--decay", train_args.decay, "weight decay");
    train->add_option("--augment", train_args.augment, "none | pad=P,crop=C,flip=F");
    train->add_option("--precision", train_args.precision, "f32 | f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    train->add_option("--out", train_args.out, "output model file")->required();
    train->add_option("--log", train_args.log_path, "training-log CSV");
    add_data_flags(train, train_args.data);

    std::string fuse_in, fuse_out;
    CLI::App* fuse = app.add_subcommand("fuse", "fuse a trained model into its plain form");
    fuse->add_option("--in", fuse_in, "trained model file")->required();
    fuse->add_option("--out", fuse_out, "fused model file")->required();

    std::string verify_a, verify_b;
    int verify_n = 200;
    std::uint64_t verify_seed = 0;
    double verify_tol = 0.0;
    CLI::App* verify = app.add_subcommand("verify", "check output equivalence of two models");
    verify->add_option("--a", verify_a)->required();
    verify->add_option("--b", verify_b)->required();
    verify->add_option("--n", verify_n, "random inputs");
    verify->add_option("--seed", verify_seed);
    verify->add_option("--tolerance", verify_tol, "override the per-precision default");

    std::string mag_model, mag_csv;
    CLI::App* mag = app.add_subcommand("analyze-magnitude", "average kernel magnitude matrix");
    mag->add_option("--model", mag_model)->required();
    mag->add_option("--out-csv", mag_csv);

    std::string sweep_model, sweep_sets = "corner,skeleton,global";
    std::string sweep_grid = "0,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4";
    int sweep_seeds = 5;
    std::uint64_t sweep_seed_base = 1;
    std::string sweep_csv;
    DataArgs sweep_data;
    CLI::App* sweep = app.add_subcommand("prune-sweep", "location-wise pruning sweep");
    sweep->add_option("--model", sweep_model)->required();
    sweep->add_option("--sets", sweep_sets, "corner,skeleton,global,border,tl2x2");
    sweep->add_option("--grid", sweep_grid, "comma-separated sparsity fractions");
    sweep->add_option("--seeds", sweep_seeds, "number of pruning seeds");
    sweep->add_option("--seed-base", sweep_seed_base, "first pruning seed");
    sweep->add_option("--out-csv", sweep_csv);
    add_data_flags(sweep, sweep_data);

    std::string dist_model, dist_csv;
    DataArgs dist_data;
    CLI::App* dist = app.add_subcommand("distort-eval", "accuracy under rotational distortions");
    dist->add_option("--model", dist_model)->required();
    dist->add_option("--out-csv", dist_csv);
    add_data_flags(dist, dist_data);

    int gen_n = 1000;
    std::uint64_t gen_seed = 0;
    int gen_classes = 4, gen_size = 16;
    std::string gen_out;
    CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic dataset file");
    gen->add_option("--n", gen_n)->required();
    gen->add_option("--seed", gen_seed);
    gen->add_option("--classes", gen_classes);
    gen->add_option("--size", gen_size);
    gen->add_option("--out", gen_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            if (train->count("--data-seed") == 0) train_args.data.seed = train_args.seed;
            return train_args.precision == "f64" ? cmd_train<double>(train_args)
                                                 : cmd_train<float>(train_args);
        }
        if (*fuse)
            return with_loaded_model(fuse_in, [&](auto& m) { return cmd_fuse(m, fuse_out); });
        if (*verify) {
            LoadedModel a = load_model_any(verify_a);
            LoadedModel b = load_model_any(verify_b);
            if (a.precision != b.precision)
                fail_invalid("verify: model precisions differ (" +
                             std::string(precision_name(a.precision)) + " vs " +
                             precision_name(b.precision) + ")");
            if (a.precision == Precision::f32)
                return cmd_verify(a.f32(), b.f32(), verify_n, verify_seed, verify_tol);
            return cmd_verify(a.f64(), b.f64(), verify_n, verify_seed, verify_tol);
        }
        if (*mag)
            return with_loaded_model(mag_model, [&](auto& m) { return cmd_magnitude(m, mag_csv); });
        if (*sweep)
            return with_loaded_model(sweep_model, [&](auto& m) {
                return cmd_prune_sweep(m, sweep_sets, sweep_grid, sweep_seeds, sweep_seed_base,
                                       sweep_data, sweep_csv);
            });
        if (*dist)
            return with_loaded_model(dist_model,
                                     [&](auto& m) { return cmd_distort_eval(m, dist_data, dist_csv); });
        if (*gen) {
            Dataset<float> d = gen_synthetic<float>(gen_n, gen_seed, gen_size, gen_classes);
            save_dataset(d, gen_out);
            std::cout << "saved " << gen_out << " (" << d.size() << " samples, " << d.class_count
                      << " classes)\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
