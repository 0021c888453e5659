#include <doctest.h>

#include <cmath>

#include "lodge/nn.hpp"
#include "lodge/optim.hpp"
#include "support.hpp"

using namespace lodge;
using test::fd_max_rel;
using test::kFdTol;
using test::random_mat;
using test::weighted_sum;

TEST_CASE("linear backward matches finite differences") {
    Rng rng(1);
    nn::Linear lin("lin", 5, 3, rng);
    lin.b.value = random_mat(1, 3, 2);
    Mat x = random_mat(4, 5, 3);
    const Mat w = random_mat(4, 3, 4);
    auto loss = [&] { return weighted_sum(lin.forward(x), w); };
    lin.w.zero_grad();
    lin.b.zero_grad();
    const Mat dx = lin.backward(x, w);
    CHECK(fd_max_rel(x, dx, loss) < kFdTol);
    CHECK(fd_max_rel(lin.w.value, lin.w.grad, loss) < kFdTol);
    CHECK(fd_max_rel(lin.b.value, lin.b.grad, loss) < kFdTol);
}

TEST_CASE("layer norm backward matches finite differences") {
    nn::LayerNorm ln("ln", 6);
    ln.g.value = random_mat(1, 6, 5, 0.5);
    ln.b.value = random_mat(1, 6, 6);
    Mat x = random_mat(5, 6, 7, 2.0);
    const Mat w = random_mat(5, 6, 8);
    auto loss = [&] {
        nn::LayerNorm::Ctx c;
        return weighted_sum(ln.forward(x, c), w);
    };
    nn::LayerNorm::Ctx ctx;
    ln.forward(x, ctx);
    ln.g.zero_grad();
    ln.b.zero_grad();
    const Mat dx = ln.backward(ctx, w);
    CHECK(fd_max_rel(x, dx, loss) < kFdTol);
    CHECK(fd_max_rel(ln.g.value, ln.g.grad, loss) < kFdTol);
    CHECK(fd_max_rel(ln.b.value, ln.b.grad, loss) < kFdTol);
}

TEST_CASE("layer norm output has zero mean and unit variance per row") {
    nn::LayerNorm ln("ln", 16);
    nn::LayerNorm::Ctx c;
    const Mat y = ln.forward(random_mat(3, 16, 9, 4.0), c);
    for (std::size_t r = 0; r < y.rows; ++r) {
        double m = 0, v = 0;
        for (double e : y.row(r)) m += e / 16.0;
        for (double e : y.row(r)) v += (e - m) * (e - m) / 16.0;
        CHECK(std::abs(m) < 1e-12);
        CHECK(v == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("gelu and softmax backward match finite differences") {
    Mat x = random_mat(4, 7, 10, 2.0);
    const Mat w = random_mat(4, 7, 11);
    CHECK(fd_max_rel(x, nn::gelu_backward(x, w), [&] { return weighted_sum(nn::gelu(x), w); }) < kFdTol);
    CHECK(fd_max_rel(x, nn::softmax_rows_backward(nn::softmax_rows(x), w), [&] { return weighted_sum(nn::softmax_rows(x), w); }) < kFdTol);
}

TEST_CASE("gelu known values") {
    Mat x(1, 3);
    x.data = {0.0, 1.0, -1.0};
    const Mat y = nn::gelu(x);
    CHECK(y.data[0] == 0.0);
    CHECK(y.data[1] == doctest::Approx(0.8413447460685429).epsilon(1e-12));
    CHECK(y.data[2] == doctest::Approx(-0.15865525393145707).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and survive large logits") {
    Mat x = random_mat(3, 5, 12);
    x(0, 0) = 800.0;
    const Mat p = nn::softmax_rows(x);
    for (std::size_t r = 0; r < 3; ++r) {
        double s = 0;
        for (double e : p.row(r)) s += e;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(p(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("attention backward matches finite differences") {
    Rng rng(13);
    const std::size_t B = 2, Sq = 3, Sk = 4, D = 4, Dk = 5;
    nn::Attention at("att", D, Dk, rng);
    for (nn::Linear* l : {&at.q, &at.k, &at.v, &at.o}) l->b.value = random_mat(1, l->out(), 14);
    Mat xq = random_mat(B * Sq, D, 15), xkv = random_mat(B * Sk, Dk, 16);
    const Mat w = random_mat(B * Sq, D, 17);
    auto loss = [&] {
        nn::Attention::Ctx c;
        return weighted_sum(at.forward(xq, Sq, xkv, Sk, c), w);
    };
    nn::Attention::Ctx ctx;
    at.forward(xq, Sq, xkv, Sk, ctx);
    nn::ParamList ps;
    at.collect(ps);
    nn::zero_grads(ps);
    const auto [dxq, dxkv] = at.backward(ctx, w);
    CHECK(fd_max_rel(xq, dxq, loss) < kFdTol);
    CHECK(fd_max_rel(xkv, dxkv, loss) < kFdTol);
    for (nn::Param* p : ps) {
        CAPTURE(p->name);
        CHECK(fd_max_rel(p->value, p->grad, loss) < kFdTol);
    }
}

TEST_CASE("attention never mixes samples of a batch") {
    Rng rng(18);
    nn::Attention at("att", 4, 4, rng);
    Mat x = random_mat(6, 4, 19);
    nn::Attention::Ctx c1, c2;
    const Mat y = at.forward(x, 3, x, 3, c1);
    Mat x2 = x;
    for (std::size_t i = 12; i < 24; ++i) x2.data[i] += 1.0;  // second sample only
    const Mat y2 = at.forward(x2, 3, x2, 3, c2);
    CHECK(y.slice_rows(0, 3) == y2.slice_rows(0, 3));
}

TEST_CASE("film backward matches finite differences and starts as identity") {
    nn::FiLM film("film", 3, 4);
    Mat x = random_mat(6, 4, 20), c = random_mat(2, 3, 21);
    nn::FiLM::Ctx c0;
    CHECK(film.forward(x, 3, c, c0) == x);
    film.map.w.value = random_mat(3, 8, 22);
    film.map.b.value = random_mat(1, 8, 23);
    const Mat w = random_mat(6, 4, 24);
    auto loss = [&] {
        nn::FiLM::Ctx k;
        return weighted_sum(film.forward(x, 3, c, k), w);
    };
    nn::FiLM::Ctx ctx;
    film.forward(x, 3, c, ctx);
    film.map.w.zero_grad();
    film.map.b.zero_grad();
    const auto [dx, dc] = film.backward(ctx, w);
    CHECK(fd_max_rel(x, dx, loss) < kFdTol);
    CHECK(fd_max_rel(c, dc, loss) < kFdTol);
    CHECK(fd_max_rel(film.map.w.value, film.map.w.grad, loss) < kFdTol);
    CHECK(fd_max_rel(film.map.b.value, film.map.b.grad, loss) < kFdTol);
}

TEST_CASE("sinusoidal embedding layout") {
    const auto e = nn::sinusoidal_embed(3.0, 6);
    REQUIRE(e.size() == 6);
    for (std::size_t i = 0; i < 3; ++i) {
        const double f = std::pow(10000.0, -2.0 * static_cast<double>(i) / 6.0);
        CHECK(e[2 * i] == doctest::Approx(std::sin(3.0 * f)));
        CHECK(e[2 * i + 1] == doctest::Approx(std::cos(3.0 * f)));
    }
    CHECK_THROWS(nn::sinusoidal_embed(1.0, 5));
}

TEST_CASE("ema update") {
    nn::Param p("p", Mat(1, 2, 1.0));
    nn::ParamList ps{&p};
    std::vector<Mat> shadow{Mat(1, 2, 0.0)};
    nn::ema_update(shadow, ps, 0.9);
    CHECK(shadow[0](0, 0) == doctest::Approx(0.1));
}

TEST_CASE("adam matches a hand-rolled update") {
    nn::Param p("p", Mat(1, 1, 0.5));
    nn::ParamList ps{&p};
    nn::OptimState st;
    nn::AdamConfig cfg;
    double w = 0.5, m = 0, v = 0;
    for (int k = 1; k <= 5; ++k) {
        const double g = 2.0 * w - 0.3;  // d/dw (w^2 - 0.3 w)
        p.grad(0, 0) = 2.0 * p.value(0, 0) - 0.3;
        nn::adam_step(ps, st, cfg);
        m = cfg.beta1 * m + (1 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
        w -= cfg.lr * (m / (1 - std::pow(cfg.beta1, k))) / (std::sqrt(v / (1 - std::pow(cfg.beta2, k))) + cfg.eps);
        CHECK(p.value(0, 0) == doctest::Approx(w).epsilon(1e-14));
    }
}

TEST_CASE("adan descends a quadratic") {
    nn::Param p("p", random_mat(3, 3, 25));
    nn::ParamList ps{&p};
    nn::OptimState st;
    nn::AdanConfig cfg;
    cfg.lr = 0.05;
    const double start = sum_squares(p.value);
    for (int k = 0; k < 200; ++k) {
        p.grad = p.value;
        scale_inplace(p.grad, 2.0);
        nn::adan_step(ps, st, cfg);
    }
    CHECK(sum_squares(p.value) < 1e-2 * start);
}

TEST_CASE("gradient clipping and non-finite detection") {
    nn::Param a("a", Mat(1, 2)), b("b", Mat(1, 1));
    a.grad.data = {3.0, 0.0};
    b.grad.data = {4.0};
    nn::ParamList ps{&a, &b};
    CHECK(nn::clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
    CHECK(std::sqrt(sum_squares(a.grad) + sum_squares(b.grad)) == doctest::Approx(1.0));
    b.grad.data = {NAN};
    nn::OptimState st;
    CHECK_THROWS_AS(nn::adam_step(ps, st, {}), nn::NonFiniteGradient);
}
