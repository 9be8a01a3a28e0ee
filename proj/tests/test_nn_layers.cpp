#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "layers.hpp"
#include "test_util.hpp"

using namespace afnet;
using nn::Mode;
using nn::Tensor;
using test::max_grad_err;
using test::num_grad;

namespace {

double weighted_sum(const Tensor& y, const Tensor& coeff) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data[i] * coeff.data[i];
    return s;
}

} // namespace

TEST_CASE("conv1d hand-computed values") {
    Rng rng(1);
    nn::Conv1d conv(1, 1, 3, 1, 0, rng);
    conv.weight.data = {1.0, 0.0, -1.0};
    conv.bias.data = {0.0};
    Tensor x({1, 1, 3}, {1.0, 2.0, 3.0});
    const Tensor y = conv.forward(x);
    REQUIRE(y.shape == std::vector<std::size_t>{1, 1, 1});
    CHECK(y(0) == doctest::Approx(-2.0).epsilon(1e-12));

    nn::Conv1d ident(1, 1, 1, 1, 0, rng);
    ident.weight.data = {1.0};
    ident.bias.data = {0.0};
    Tensor x2({1, 1, 5}, {0.5, -1.0, 2.0, 0.0, 3.0});
    const Tensor y2 = ident.forward(x2);
    for (std::size_t i = 0; i < 5; ++i) CHECK(y2(i) == x2(i));
}

TEST_CASE("conv1d stride and padding output lengths") {
    Rng rng(2);
    nn::Conv1d conv(1, 1, 9, 2, 4, rng);
    CHECK(conv.out_len(6000) == 3000);
    CHECK(conv.out_len(47) == 24);
    CHECK(conv.out_len(375) == 188);
}

TEST_CASE("conv1d gradients") {
    Rng rng(3);
    for (int inst = 0; inst < 5; ++inst) {
        nn::Conv1d conv(2, 3, 3, inst % 2 + 1, 1, rng);
        Tensor x = nn::randn({2, 2, 9}, rng);
        const Tensor y0 = conv.forward(x);
        const Tensor coeff = nn::randn(y0.shape, rng);
        auto loss = [&] { return weighted_sum(conv.forward(x), coeff); };
        loss();
        conv.grad_weight = Tensor(conv.grad_weight.shape);
        conv.grad_bias = Tensor(conv.grad_bias.shape);
        const Tensor gx = conv.backward(coeff);
        CHECK(max_grad_err(loss, x, gx) < 1e-4);
        CHECK(max_grad_err(loss, conv.weight, conv.grad_weight) < 1e-4);
        CHECK(max_grad_err(loss, conv.bias, conv.grad_bias) < 1e-4);
    }
}

TEST_CASE("batchnorm train statistics and eval running stats") {
    Rng rng(4);
    nn::BatchNorm bn(2);
    Tensor x = nn::randn({4, 2, 7}, rng, 3.0);
    const Tensor y = bn.forward(x, Mode::Train);
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t l = 0; l < 7; ++l) mean += y.at3(b, c, l);
        mean /= 28.0;
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t l = 0; l < 7; ++l) {
                const double d = y.at3(b, c, l) - mean;
                var += d * d;
            }
        var /= 28.0;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
    // eval on the same data after many train passes approaches the train stats
    for (int i = 0; i < 200; ++i) bn.forward(x, Mode::Train);
    const Tensor ye = bn.forward(x, Mode::Eval);
    double mean = 0.0;
    for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t l = 0; l < 7; ++l) mean += ye.at3(b, 0, l);
    CHECK(mean / 28.0 == doctest::Approx(0.0).epsilon(1e-3));
}

TEST_CASE("batchnorm gradients, 3d and 2d, both modes") {
    Rng rng(5);
    for (const Mode mode : {Mode::Train, Mode::Eval}) {
        nn::BatchNorm bn(3);
        // give running stats some non-trivial state
        bn.forward(nn::randn({4, 3, 5}, rng), Mode::Train);
        Tensor x = nn::randn({4, 3, 5}, rng);
        const Tensor coeff = nn::randn({4, 3, 5}, rng);
        auto loss = [&] { return weighted_sum(bn.forward(x, mode), coeff); };
        loss();
        bn.grad_gamma = Tensor(bn.grad_gamma.shape);
        bn.grad_beta = Tensor(bn.grad_beta.shape);
        const Tensor gx = bn.backward(coeff);
        // FD in train mode re-updates running stats, which the output ignores
        CHECK(max_grad_err(loss, x, gx) < 1e-4);
        CHECK(max_grad_err(loss, bn.gamma, bn.grad_gamma) < 1e-4);
        CHECK(max_grad_err(loss, bn.beta, bn.grad_beta) < 1e-4);
    }
    nn::BatchNorm bn2(4);
    Tensor x2 = nn::randn({6, 4}, rng);
    const Tensor coeff2 = nn::randn({6, 4}, rng);
    auto loss2 = [&] { return weighted_sum(bn2.forward(x2, Mode::Train), coeff2); };
    loss2();
    const Tensor gx2 = bn2.backward(coeff2);
    CHECK(max_grad_err(loss2, x2, gx2) < 1e-4);
}

TEST_CASE("activation gradients") {
    Rng rng(6);
    Tensor x = nn::randn({3, 4}, rng);
    // keep clear of the relu kink
    for (auto& v : x.data)
        if (std::abs(v) < 0.05) v += 0.1;
    const Tensor coeff = nn::randn({3, 4}, rng);

    nn::Relu relu;
    auto l1 = [&] { return weighted_sum(relu.forward(x), coeff); };
    l1();
    CHECK(max_grad_err(l1, x, relu.backward(coeff)) < 1e-4);

    nn::LeakyRelu lrelu;
    auto l2 = [&] { return weighted_sum(lrelu.forward(x), coeff); };
    l2();
    CHECK(max_grad_err(l2, x, lrelu.backward(coeff)) < 1e-4);

    nn::Sigmoid sig;
    auto l3 = [&] { return weighted_sum(sig.forward(x), coeff); };
    l3();
    CHECK(max_grad_err(l3, x, sig.backward(coeff)) < 1e-4);

    nn::TanhLayer th;
    auto l4 = [&] { return weighted_sum(th.forward(x), coeff); };
    l4();
    CHECK(max_grad_err(l4, x, th.backward(coeff)) < 1e-4);
}

TEST_CASE("maxpool values and gradients") {
    nn::MaxPool1d pool(2, 2);
    Tensor x({1, 1, 4}, {1.0, 3.0, 2.0, 4.0});
    const Tensor y = pool.forward(x);
    REQUIRE(y.size() == 2);
    CHECK(y(0) == 3.0);
    CHECK(y(1) == 4.0);

    // -inf padding: a padded window never selects the pad position
    nn::MaxPool1d pp(3, 2, 1);
    Tensor xn({1, 1, 4}, {-5.0, -7.0, -6.0, -8.0});
    const Tensor yn = pp.forward(xn);
    CHECK(yn(0) == -5.0);

    Rng rng(7);
    nn::MaxPool1d pg(3, 2, 1);
    Tensor xg = nn::randn({2, 3, 9}, rng);
    const Tensor y0 = pg.forward(xg);
    const Tensor coeff = nn::randn(y0.shape, rng);
    auto loss = [&] { return weighted_sum(pg.forward(xg), coeff); };
    loss();
    CHECK(max_grad_err(loss, xg, pg.backward(coeff)) < 1e-4);
}

TEST_CASE("dense hand values and gradients") {
    Rng rng(8);
    nn::Dense d(2, 1, rng);
    d.weight.data = {3.0, 4.0};
    d.bias.data = {1.0};
    Tensor x({1, 2}, {1.0, 2.0});
    CHECK(d.forward(x)(0) == doctest::Approx(12.0).epsilon(1e-12));

    nn::Dense dg(4, 3, rng);
    Tensor xg = nn::randn({5, 4}, rng);
    const Tensor coeff = nn::randn({5, 3}, rng);
    auto loss = [&] { return weighted_sum(dg.forward(xg), coeff); };
    loss();
    dg.grad_weight = Tensor(dg.grad_weight.shape);
    dg.grad_bias = Tensor(dg.grad_bias.shape);
    const Tensor gx = dg.backward(coeff);
    CHECK(max_grad_err(loss, xg, gx) < 1e-4);
    CHECK(max_grad_err(loss, dg.weight, dg.grad_weight) < 1e-4);
    CHECK(max_grad_err(loss, dg.bias, dg.grad_bias) < 1e-4);
}

TEST_CASE("dropout semantics") {
    Rng rng(9);
    nn::Dropout drop(0.5);
    Tensor x({1, 1000});
    for (auto& v : x.data) v = 1.0;
    const Tensor ye = drop.forward(x, Mode::Eval, rng);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(ye(i) == x(i));

    const Tensor yt = drop.forward(x, Mode::Train, rng);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < yt.size(); ++i) {
        CHECK((yt(i) == 0.0 || yt(i) == doctest::Approx(2.0)));
        if (yt(i) != 0.0) ++kept;
    }
    CHECK(kept > 400);
    CHECK(kept < 600);
    // backward mirrors the survivor mask
    Tensor g({1, 1000});
    for (auto& v : g.data) v = 1.0;
    const Tensor gx = drop.backward(g);
    for (std::size_t i = 0; i < gx.size(); ++i)
        CHECK(gx(i) == (yt(i) == 0.0 ? 0.0 : doctest::Approx(2.0)));
}

TEST_CASE("weighted bce values and logit-form consistency") {
    Tensor p({1}, {0.5});
    Tensor y1({1}, {1.0});
    CHECK(nn::weighted_bce(p, y1, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(nn::weighted_bce(p, y1, 2.0) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    Tensor y0({1}, {0.0});
    CHECK(nn::weighted_bce(p, y0, 2.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Rng rng(10);
    Tensor logits = nn::randn({8}, rng, 2.0);
    Tensor targets({8});
    for (auto& t : targets.data) t = rng.bernoulli(0.5) ? 1.0 : 0.0;
    Tensor probs({8});
    for (std::size_t i = 0; i < 8; ++i) probs(i) = 1.0 / (1.0 + std::exp(-logits(i)));
    CHECK(nn::weighted_bce_logits(logits, targets, 1.7) ==
          doctest::Approx(nn::weighted_bce(probs, targets, 1.7)).epsilon(1e-9));

    auto loss = [&] { return nn::weighted_bce_logits(logits, targets, 1.7); };
    const Tensor g = nn::weighted_bce_logits_grad(logits, targets, 1.7);
    CHECK(max_grad_err(loss, logits, g) < 1e-4);
}

TEST_CASE("loss is non-negative, zero at perfect predictions") {
    Tensor perfect({2}, {1.0, 0.0});
    Tensor targets({2}, {1.0, 0.0});
    CHECK(nn::weighted_bce(perfect, targets, 3.0) == doctest::Approx(0.0).epsilon(1e-5));
    Rng rng(11);
    for (int i = 0; i < 20; ++i) {
        Tensor p({4});
        for (auto& v : p.data) v = rng.uniform();
        Tensor t({4});
        for (auto& v : t.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
        CHECK(nn::weighted_bce(p, t, 2.0) >= 0.0);
    }
}

TEST_CASE("adam single step closed form") {
    Rng rng(12);
    Tensor w({2}, {1.0, -2.0});
    Tensor g({2}, {0.3, -0.7});
    std::vector<nn::ParamSlot> slots = {{"w", "dense", &w, &g, true}};
    nn::AdamConfig cfg;
    cfg.lr = 0.01;
    nn::Adam adam(cfg);
    adam.step(slots);
    // after one step mhat = g, vhat = g^2: delta = lr * g / (|g| + eps)
    CHECK(w(0) == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
    CHECK(w(1) == doctest::Approx(-2.0 + 0.01 * 0.7 / (0.7 + 1e-8)).epsilon(1e-12));
    // step zeroes the gradient
    CHECK(g(0) == 0.0);
    CHECK(g(1) == 0.0);
}

TEST_CASE("parameter serialization round trip") {
    Rng rng(13);
    nn::Dense a(3, 2, rng), b(3, 2, rng);
    nn::BatchNorm bna(2), bnb(2);
    bna.forward(nn::randn({4, 2}, rng), Mode::Train); // moves running stats
    std::vector<nn::ParamSlot> src, dst;
    a.collect(src, "d");
    bna.collect(src, "bn");
    b.collect(dst, "d");
    bnb.collect(dst, "bn");
    const std::string path = "params_roundtrip_test.bin";
    nn::save_params(src, path);
    nn::load_params(dst, path);
    for (std::size_t i = 0; i < src.size(); ++i)
        for (std::size_t j = 0; j < src[i].value->size(); ++j)
            CHECK(dst[i].value->data[j] ==
                  doctest::Approx(src[i].value->data[j]).epsilon(1e-6));
    std::remove(path.c_str());

    // shape mismatch rejected
    nn::Dense wrong(4, 2, rng);
    std::vector<nn::ParamSlot> bad;
    wrong.collect(bad, "d");
    nn::save_params(src, path);
    CHECK_THROWS_AS(nn::load_params(bad, path), ConfigError);
    std::remove(path.c_str());
}
