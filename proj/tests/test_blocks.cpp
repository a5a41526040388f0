#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "acnet/blocks.hpp"

#include "acnet/model.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace acnet;
using namespace testutil;

namespace {

void make_identity_bn(BatchNorm<double>& bn) {
    std::fill(bn.gamma.value.begin(), bn.gamma.value.end(), 1.0);
    std::fill(bn.beta.value.begin(), bn.beta.value.end(), 0.0);
    std::fill(bn.running_mean.begin(), bn.running_mean.end(), 0.0);
    for (auto& v : bn.running_var) v = 1.0 - bn.eps;
}

void randomize_bn(BatchNorm<double>& bn, Rng& rng) {
    for (auto& v : bn.gamma.value) v = rng.uniform(0.5, 1.5);
    for (auto& v : bn.beta.value) v = rng.uniform(-0.5, 0.5);
    for (auto& v : bn.running_mean) v = rng.uniform(-0.3, 0.3);
    for (auto& v : bn.running_var) v = rng.uniform(0.5, 2.0);
}

// eval-mode conv + BN evaluated from first principles
Tensor<double> branch_oracle(const Tensor<double>& x, const FilterBank<double>& bank,
                             const ConvGeometry& g, const BatchNorm<double>& bn) {
    Tensor<double> y = reference_conv2d(x, bank, g);
    for (int in = 0; in < y.n; ++in)
        for (int ic = 0; ic < y.c; ++ic)
            for (int i = 0; i < y.h; ++i)
                for (int j = 0; j < y.w; ++j)
                    y.at(in, ic, i, j) = bn.gamma.value[ic] * (y.at(in, ic, i, j) - bn.running_mean[ic]) /
                                             std::sqrt(bn.running_var[ic] + bn.eps) +
                                         bn.beta.value[ic];
    return y;
}

const char* kToySpec =
    "input 1 10 10\n"
    "conv 4 3x3 stride 1 pad 1 acb\n"
    "relu\n"
    "maxpool 2 2\n"
    "conv 8 3x3 stride 1 pad 1 acb\n"
    "relu\n"
    "gap\n"
    "linear 3\n";

}  // namespace

TEST_CASE("spec round-trips through format and parse") {
    ModelSpec spec = parse_model_spec(kToySpec);
    ModelSpec again = parse_model_spec(format_model_spec(spec));
    CHECK(format_model_spec(spec) == format_model_spec(again));
    CHECK(spec.layers.size() == 7);
}

TEST_CASE("spec rejects acb on incompatible convs, naming the layer") {
    CHECK_THROWS_WITH_AS(parse_model_spec("input 1 8 8\nconv 4 5x5 stride 1 pad 2 acb\n"),
                         doctest::Contains("layer 0"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_model_spec("input 1 8 8\nconv 4 3x3 stride 1 pad 0 acb\n"),
                         doctest::Contains("acb requires"), std::invalid_argument);
    CHECK_THROWS_AS(parse_model_spec("input 1 2 2\nmaxpool 4 4\n"), std::invalid_argument);
}

TEST_CASE("expansion with zero acb layers equals the plain build") {
    ModelSpec spec = override_blocks(parse_model_spec(kToySpec), "off");
    Model<double> m = expand_to_acnet<double>(spec, Ablation{}, BuildOptions{.seed = 7});
    for (auto& layer : m.layers) CHECK(std::string(layer->kind()) != "acb");
    CHECK(std::string(m.layers[0]->kind()) == "convbn");
}

TEST_CASE("acb expansion adds exactly the asymmetric kernels and BN states") {
    ModelSpec spec = parse_model_spec(kToySpec);
    Model<double> plain =
        expand_to_acnet<double>(override_blocks(spec, "off"), Ablation{}, BuildOptions{.seed = 7});
    Model<double> acnet = expand_to_acnet<double>(spec, Ablation{}, BuildOptions{.seed = 7});

    // per acb conv: d*c*(3+3) kernel weights plus gamma/beta of 2 extra BNs
    size_t expected = trainable_param_count(plain);
    expected += 4 * 1 * 6 + 4 * (2 * 2);
    expected += 8 * 4 * 6 + 8 * (2 * 2);
    CHECK(trainable_param_count(acnet) == expected);
    CHECK(bn_state_count(acnet) == bn_state_count(plain) + 4);

    Ablation horizontal_only{true, false, true};
    Model<double> ho = expand_to_acnet<double>(spec, horizontal_only, BuildOptions{.seed = 7});
    auto& block = static_cast<ACBlockLayer<double>&>(*ho.layers[0]);
    CHECK(block.has_horizontal());
    CHECK_FALSE(block.has_vertical());
}

TEST_CASE("acb with zero asymmetric weights and identity BN equals the square branch") {
    ACBlockLayer<double> block(3, 2, 1, true, true, true, false, 1e-5, 0.1);
    Rng rng(17);
    for (auto& v : block.square_bn->conv.weight.value) v = rng.uniform(-1, 1);
    make_identity_bn(block.square_bn->bn);
    make_identity_bn(block.horizontal_bn->bn);
    make_identity_bn(block.vertical_bn->bn);
    // horizontal/vertical conv weights stay zero

    Tensor<double> x = random_tensor<double>(2, 2, 6, 6, rng);
    Tensor<double> got = block.forward(x, RunMode::eval);
    Tensor<double> want = block.square_bn->forward(x, RunMode::eval);
    CHECK(max_abs_diff(got, want) == 0.0);
}

TEST_CASE("acb with zero square weights responds through the asymmetric branches") {
    ACBlockLayer<double> block(2, 1, 1, true, true, true, false, 1e-5, 0.1);
    Rng rng(29);
    for (auto& v : block.horizontal_bn->conv.weight.value) v = rng.uniform(-1, 1);
    for (auto& v : block.vertical_bn->conv.weight.value) v = rng.uniform(-1, 1);
    make_identity_bn(block.square_bn->bn);
    make_identity_bn(block.horizontal_bn->bn);
    make_identity_bn(block.vertical_bn->bn);

    Tensor<double> x(1, 1, 5, 5);
    std::fill(x.data.begin(), x.data.end(), 0.7);  // constant input
    Tensor<double> got = block.forward(x, RunMode::eval);
    Tensor<double> want =
        reference_conv2d(x, block.horizontal_bn->conv.bank(), ConvGeometry(1, 1, 0, 1));
    add_into(want, reference_conv2d(x, block.vertical_bn->conv.bank(), ConvGeometry(1, 1, 1, 0)));
    CHECK(max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("random acb matches the three-pass compositional oracle") {
    for (int stride : {1, 2}) {
        ACBlockLayer<double> block(3, 2, stride, true, true, true, false, 1e-5, 0.1);
        Rng rng(23 + stride);
        for (auto* br : {&*block.square_bn, &*block.horizontal_bn, &*block.vertical_bn}) {
            for (auto& v : br->conv.weight.value) v = rng.uniform(-1, 1);
            randomize_bn(br->bn, rng);
        }
        Tensor<double> x = random_tensor<double>(2, 2, 7, 7, rng);
        Tensor<double> got = block.forward(x, RunMode::eval);

        Tensor<double> want =
            branch_oracle(x, block.square_bn->conv.bank(), ConvGeometry(stride, stride, 1, 1),
                          block.square_bn->bn);
        add_into(want, branch_oracle(x, block.horizontal_bn->conv.bank(),
                                     ConvGeometry(stride, stride, 0, 1), block.horizontal_bn->bn));
        add_into(want, branch_oracle(x, block.vertical_bn->conv.bank(),
                                     ConvGeometry(stride, stride, 1, 0), block.vertical_bn->bn));
        REQUIRE(got.same_dims(want));
        CHECK(max_abs_diff(got, want) < 1e-6);
    }
}

TEST_CASE("geometry lemma: branch output dims agree for any stride") {
    Rng rng(31);
    for (int stride : {1, 2, 3}) {
        for (int h : {5, 6, 9}) {
            for (int w : {5, 8}) {
                Tensor<double> x = random_tensor<double>(1, 2, h, w, rng);
                FilterBank<double> sq = random_bank<double>(3, 2, 3, 3, rng);
                FilterBank<double> hb = random_bank<double>(3, 2, 1, 3, rng);
                FilterBank<double> vb = random_bank<double>(3, 2, 3, 1, rng);
                Tensor<double> ys = conv2d(x, sq, ConvGeometry(stride, stride, 1, 1));
                Tensor<double> yh = conv2d(x, hb, ConvGeometry(stride, stride, 0, 1));
                Tensor<double> yv = conv2d(x, vb, ConvGeometry(stride, stride, 1, 0));
                CHECK(ys.same_dims(yh));
                CHECK(ys.same_dims(yv));
            }
        }
    }
}

TEST_CASE("window alignment: horizontal branch reads only the window's middle row") {
    for (int stride : {1, 2}) {
        FilterBank<double> hb(1, 1, 1, 3);
        std::fill(hb.weights.begin(), hb.weights.end(), 1.0);
        const int h = 9, w = 9;
        for (int y0 : {0, 3, 4, 8}) {
            Tensor<double> x(1, 1, h, w);
            x.at(0, 0, y0, 4) = 1.0;
            Tensor<double> y = conv2d(x, hb, ConvGeometry(stride, stride, 0, 1));
            for (int i = 0; i < y.h; ++i)
                for (int j = 0; j < y.w; ++j) {
                    const bool expects_hit = (stride * i == y0);
                    if (!expects_hit) CHECK(y.at(0, 0, i, j) == 0.0);
                }
        }
    }
}

TEST_CASE("disabling a branch equals forcing it to the additive identity") {
    Rng rng(41);
    ACBlockLayer<double> two(3, 2, 1, true, false, true, false, 1e-5, 0.1);
    ACBlockLayer<double> three(3, 2, 1, true, true, true, false, 1e-5, 0.1);
    for (auto& v : two.square_bn->conv.weight.value) v = rng.uniform(-1, 1);
    for (auto& v : two.horizontal_bn->conv.weight.value) v = rng.uniform(-1, 1);
    randomize_bn(two.square_bn->bn, rng);
    randomize_bn(two.horizontal_bn->bn, rng);

    three.square_bn = *two.square_bn;
    three.horizontal_bn = *two.horizontal_bn;
    // vertical branch: zero weights, identity BN -> contributes zero
    make_identity_bn(three.vertical_bn->bn);

    Tensor<double> x = random_tensor<double>(2, 2, 6, 6, rng);
    CHECK(max_abs_diff(two.forward(x, RunMode::eval), three.forward(x, RunMode::eval)) == 0.0);

    const size_t branch_params = 3 * 2 * 3 + 2 * 3;  // kernel + gamma/beta
    std::vector<Param<double>*> p2, p3;
    two.collect_params(p2);
    three.collect_params(p3);
    size_t n2 = 0, n3 = 0;
    for (auto* p : p2) n2 += p->value.size();
    for (auto* p : p3) n3 += p->value.size();
    CHECK(n3 - n2 == branch_params);
}

TEST_CASE("post-summation BN ablation applies one BN after the branch sum") {
    ACBlockLayer<double> block(2, 1, 1, true, true, false, false, 1e-5, 0.1);
    Rng rng(43);
    for (auto* conv : {&*block.square_conv, &*block.horizontal_conv, &*block.vertical_conv})
        for (auto& v : conv->weight.value) v = rng.uniform(-1, 1);
    randomize_bn(*block.post_bn, rng);

    Tensor<double> x = random_tensor<double>(2, 1, 5, 5, rng);
    Tensor<double> got = block.forward(x, RunMode::eval);

    Tensor<double> summed = reference_conv2d(x, block.square_conv->bank(), ConvGeometry(1, 1, 1, 1));
    add_into(summed,
             reference_conv2d(x, block.horizontal_conv->bank(), ConvGeometry(1, 1, 0, 1)));
    add_into(summed, reference_conv2d(x, block.vertical_conv->bank(), ConvGeometry(1, 1, 1, 0)));
    Tensor<double> want = summed;
    for (int in = 0; in < want.n; ++in)
        for (int ic = 0; ic < want.c; ++ic)
            for (int i = 0; i < want.h; ++i)
                for (int j = 0; j < want.w; ++j)
                    want.at(in, ic, i, j) =
                        block.post_bn->gamma.value[ic] * (want.at(in, ic, i, j) -
                                                          block.post_bn->running_mean[ic]) /
                            std::sqrt(block.post_bn->running_var[ic] + block.post_bn->eps) +
                        block.post_bn->beta.value[ic];
    CHECK(max_abs_diff(got, want) < 1e-9);
}

TEST_CASE("single linear layer on unit input gives row sums plus bias") {
    ModelSpec spec = parse_model_spec("input 3 1 1\nlinear 4\n");
    Model<double> m = expand_to_acnet<double>(spec, Ablation{}, BuildOptions{.seed = 3});
    auto& lin = static_cast<LinearLayer<double>&>(*m.layers[0]);
    Tensor<double> x(1, 3, 1, 1);
    std::fill(x.data.begin(), x.data.end(), 1.0);
    Tensor<double> y = m.forward(x, RunMode::eval);
    for (int k = 0; k < 4; ++k) {
        double want = lin.bias.value[static_cast<size_t>(k)];
        for (int f = 0; f < 3; ++f) want += lin.weight.value[static_cast<size_t>(k) * 3 + f];
        CHECK(y.at(0, k, 0, 0) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("softmax of model logits sums to one per sample") {
    ModelSpec spec = parse_model_spec(kToySpec);
    Model<double> m = expand_to_acnet<double>(spec, Ablation{}, BuildOptions{.seed = 5});
    Rng rng(5);
    Tensor<double> x = random_tensor<double>(3, 1, 10, 10, rng);
    Tensor<double> logits = m.forward(x, RunMode::eval);
    SoftmaxXentResult<double> res = softmax_xent(logits, std::vector<int>{0, 1, 2});
    for (int in = 0; in < 3; ++in) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += res.probs.at(in, k, 0, 0);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("model forward rejects wrong input dims") {
    ModelSpec spec = parse_model_spec(kToySpec);
    Model<double> m = expand_to_acnet<double>(spec, Ablation{});
    Tensor<double> bad(1, 2, 10, 10);
    CHECK_THROWS_AS(m.forward(bad, RunMode::eval), std::invalid_argument);
}

// Frozen at first build: seed 42, ramp input, eval-mode logits.
TEST_CASE("fixed seed tiny model regression snapshot") {
    ModelSpec spec = parse_model_spec(
        "input 1 6 6\nconv 3 3x3 stride 1 pad 1 acb\nrelu\ngap\nlinear 2\n");
    Model<double> m = expand_to_acnet<double>(spec, Ablation{}, BuildOptions{.seed = 42});
    Tensor<double> x(2, 1, 6, 6);
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] = 0.01 * static_cast<double>(i);
    Tensor<double> logits = m.forward(x, RunMode::eval);
    const double want[2][2] = {{-0.1280386329933243, 0.10134303987036157},
                               {-0.2419177427282746, 0.19147876600601993}};
    for (int in = 0; in < 2; ++in)
        for (int k = 0; k < 2; ++k)
            CHECK(logits.at(in, k, 0, 0) == doctest::Approx(want[in][k]).epsilon(1e-9));
}
