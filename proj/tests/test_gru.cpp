#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "layers.hpp"
#include "test_util.hpp"

using namespace afnet;
using nn::Tensor;
using test::max_grad_err;

namespace {

double weighted_sum(const Tensor& y, const Tensor& coeff) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data[i] * coeff.data[i];
    return s;
}

void zero_param_grads(nn::Gru& g) {
    for (Tensor* t : {&g.gwz, &g.gwr, &g.gwc, &g.guz, &g.gur, &g.guc, &g.gbz, &g.gbr, &g.gbc,
                      &g.gcz, &g.gcr, &g.gcc})
        *t = Tensor(t->shape);
}

} // namespace

TEST_CASE("gru zero weights produce zero output") {
    Rng rng(1);
    nn::Gru gru(3, 4, rng);
    for (Tensor* t : {&gru.wz, &gru.wr, &gru.wc, &gru.uz, &gru.ur, &gru.uc, &gru.bz, &gru.br,
                      &gru.bc, &gru.cz, &gru.cr, &gru.cc})
        for (auto& v : t->data) v = 0.0;
    const Tensor y = gru.forward(nn::randn({2, 5, 3}, rng));
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y(i) == 0.0);
}

TEST_CASE("gru update-gate convention: h_t = (1-z)*cand + z*h_prev") {
    // with huge update-gate bias z ~ 1, so the state never moves from zero
    Rng rng(2);
    nn::Gru gru(2, 3, rng);
    for (auto& v : gru.bz.data) v = 50.0;
    const Tensor y = gru.forward(nn::randn({1, 6, 2}, rng));
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y(i)) < 1e-9);
}

TEST_CASE("gru single-step hand computation") {
    Rng rng(3);
    nn::Gru gru(1, 1, rng);
    gru.wz.data = {0.5}; gru.wr.data = {-0.3}; gru.wc.data = {0.8};
    gru.uz.data = {0.1}; gru.ur.data = {0.2}; gru.uc.data = {0.4};
    gru.bz.data = {0.05}; gru.br.data = {-0.1}; gru.bc.data = {0.2};
    gru.cz.data = {0.15}; gru.cr.data = {0.0}; gru.cc.data = {-0.25};
    const double x = 0.7;
    const Tensor y = gru.forward(Tensor({1, 1, 1}, {x}));
    // h_prev = 0
    const auto sigm = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    const double z = sigm(0.5 * x + 0.05 + 0.15);
    const double r = sigm(-0.3 * x - 0.1 + 0.0);
    const double cand = std::tanh(0.8 * x + 0.2 + r * (0.4 * 0.0 - 0.25));
    const double h = (1.0 - z) * cand + z * 0.0;
    CHECK(y(0) == doctest::Approx(h).epsilon(1e-12));
}

TEST_CASE("gru gradients by finite differences") {
    Rng rng(4);
    for (int inst = 0; inst < 3; ++inst) {
        nn::Gru gru(3, 5, rng);
        Tensor x = nn::randn({2, 4, 3}, rng);
        const Tensor coeff = nn::randn({2, 4, 5}, rng);
        auto loss = [&] { return weighted_sum(gru.forward(x), coeff); };
        loss();
        zero_param_grads(gru);
        const Tensor gx = gru.backward(coeff);
        CHECK(max_grad_err(loss, x, gx) < 1e-3);
        CHECK(max_grad_err(loss, gru.wz, gru.gwz) < 1e-3);
        CHECK(max_grad_err(loss, gru.wr, gru.gwr) < 1e-3);
        CHECK(max_grad_err(loss, gru.wc, gru.gwc) < 1e-3);
        CHECK(max_grad_err(loss, gru.uz, gru.guz) < 1e-3);
        CHECK(max_grad_err(loss, gru.ur, gru.gur) < 1e-3);
        CHECK(max_grad_err(loss, gru.uc, gru.guc) < 1e-3);
        CHECK(max_grad_err(loss, gru.bz, gru.gbz) < 1e-3);
        CHECK(max_grad_err(loss, gru.br, gru.gbr) < 1e-3);
        CHECK(max_grad_err(loss, gru.bc, gru.gbc) < 1e-3);
        CHECK(max_grad_err(loss, gru.cz, gru.gcz) < 1e-3);
        CHECK(max_grad_err(loss, gru.cr, gru.gcr) < 1e-3);
        CHECK(max_grad_err(loss, gru.cc, gru.gcc) < 1e-3);
    }
}

TEST_CASE("bigru output layout: [forward ; time-reversed backward]") {
    Rng rng(5);
    nn::BiGru bi(3, 4, rng);
    Tensor x = nn::randn({2, 6, 3}, rng);
    const Tensor y = bi.forward(x);
    REQUIRE(y.shape == std::vector<std::size_t>{2, 6, 8});

    nn::Gru fwd_copy(3, 4, rng), bwd_copy(3, 4, rng);
    auto copy_params = [](nn::Gru& dst, const nn::Gru& src) {
        dst.wz = src.wz; dst.wr = src.wr; dst.wc = src.wc;
        dst.uz = src.uz; dst.ur = src.ur; dst.uc = src.uc;
        dst.bz = src.bz; dst.br = src.br; dst.bc = src.bc;
        dst.cz = src.cz; dst.cr = src.cr; dst.cc = src.cc;
    };
    copy_params(fwd_copy, bi.fwd);
    copy_params(bwd_copy, bi.bwd);
    const Tensor yf = fwd_copy.forward(x);
    Tensor xr({2, 6, 3});
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t t = 0; t < 6; ++t)
            for (std::size_t i = 0; i < 3; ++i)
                xr.data[(b * 6 + t) * 3 + i] = x.data[(b * 6 + (5 - t)) * 3 + i];
    const Tensor yb = bwd_copy.forward(xr);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t t = 0; t < 6; ++t)
            for (std::size_t h = 0; h < 4; ++h) {
                CHECK(y.data[(b * 6 + t) * 8 + h] ==
                      doctest::Approx(yf.data[(b * 6 + t) * 4 + h]).epsilon(1e-12));
                CHECK(y.data[(b * 6 + t) * 8 + 4 + h] ==
                      doctest::Approx(yb.data[(b * 6 + (5 - t)) * 4 + h]).epsilon(1e-12));
            }
}

TEST_CASE("bigru gradients by finite differences") {
    Rng rng(6);
    nn::BiGru bi(2, 3, rng);
    Tensor x = nn::randn({2, 4, 2}, rng);
    const Tensor coeff = nn::randn({2, 4, 6}, rng);
    auto loss = [&] { return weighted_sum(bi.forward(x), coeff); };
    loss();
    zero_param_grads(bi.fwd);
    zero_param_grads(bi.bwd);
    const Tensor gx = bi.backward(coeff);
    CHECK(max_grad_err(loss, x, gx) < 1e-3);
    CHECK(max_grad_err(loss, bi.fwd.wc, bi.fwd.gwc) < 1e-3);
    CHECK(max_grad_err(loss, bi.bwd.wc, bi.bwd.gwc) < 1e-3);
    CHECK(max_grad_err(loss, bi.fwd.uc, bi.fwd.guc) < 1e-3);
    CHECK(max_grad_err(loss, bi.bwd.cc, bi.bwd.gcc) < 1e-3);
}

TEST_CASE("gru forward is deterministic") {
    Rng rng(7);
    nn::Gru gru(3, 4, rng);
    Tensor x = nn::randn({1, 8, 3}, rng);
    const Tensor y1 = gru.forward(x);
    const Tensor y2 = gru.forward(x);
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1(i) == y2(i));
}
