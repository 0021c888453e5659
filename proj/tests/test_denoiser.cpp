#include <doctest.h>

#include <cmath>

#include "lodge/checkpoint.hpp"
#include "lodge/dataset.hpp"
#include "lodge/denoiser.hpp"
#include "lodge/foot.hpp"
#include "lodge/local_stage.hpp"
#include "lodge/losses.hpp"
#include "support.hpp"

using namespace lodge;
using test::fd_max_rel;
using test::kFdTol;
using test::random_mat;
using test::weighted_sum;

namespace {

DenoiserConfig tiny_config(bool refine) {
    DenoiserConfig c;
    c.model_dim = 8;
    c.blocks = 2;
    c.time_embed_dim = 8;
    c.cond_dim = 6;
    c.seq_len = 6;
    c.mlp_ratio = 2;
    c.cond_encoder = true;
    c.foot_refine = refine;
    return c;
}

// Every parameter drawn at random so that zero-initialized paths carry gradient.
void scramble(Denoiser& net, std::uint64_t seed) {
    Rng rng(seed);
    for (nn::Param* p : net.params())
        for (double& v : p->value.data) v = 0.4 * rng.normal();
}

Normalizer random_normalizer(std::uint64_t seed) {
    Rng rng(seed);
    Normalizer n;
    for (std::size_t c = 0; c < motion::kMotionDim; ++c) {
        n.mean[c] = 0.2 * rng.normal();
        n.scale[c] = 0.1 + rng.uniform();
    }
    // Root height near standing so the feet sit close to the ground.
    n.mean[motion::kTransOffset + 1] = 0.9;
    n.scale[motion::kTransOffset + 1] = 0.05;
    return n;
}

// Real synthetic dance frames: feet touch the ground, so contact scores are not saturated.
Mat dance_frames(std::size_t rows, std::uint64_t seed) {
    return dataset::generate_synthetic_pair(std::max<std::size_t>(rows, 64), 16, 1, seed).dance.frames.slice_rows(20, rows);
}

}  // namespace

TEST_CASE("normalizer round trip, fit and persistence") {
    const Mat a = dance_frames(40, 1), b = dance_frames(30, 2);
    const Normalizer n = fit_normalizer({&a, &b});
    CHECK(max_abs_diff(n.decode(n.encode(a)), a) < 1e-12);
    for (double s : n.scale) CHECK(s >= 0.05);
    // A channel with plenty of spread gets its own standard deviation.
    double m = 0, v = 0;
    const std::size_t c = motion::kTransOffset;
    for (const Mat* x : {&a, &b})
        for (std::size_t r = 0; r < x->rows; ++r) m += (*x)(r, c) / 70.0;
    for (const Mat* x : {&a, &b})
        for (std::size_t r = 0; r < x->rows; ++r) v += ((*x)(r, c) - m) * ((*x)(r, c) - m) / 69.0;
    CHECK(n.mean[c] == doctest::Approx(m).epsilon(1e-12));
    if (std::sqrt(v) > 0.05) CHECK(n.scale[c] == doctest::Approx(std::sqrt(v)).epsilon(1e-12));

    ckpt::Checkpoint ck;
    put_normalizer(ck, n);
    const Normalizer back = get_normalizer(ck);
    CHECK(back.mean == n.mean);
    CHECK(back.scale == n.scale);

    Normalizer bad = n;
    bad.scale[3] = 0.0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("foot features backward matches finite differences") {
    const auto& chain = motion::KinematicChain::smpl22();
    const foot::ContactParams p;
    Mat f = dance_frames(12, 3);
    const Mat w = random_mat(f.rows, foot::kFeatureDim, 4);
    const Mat g = foot::foot_features_backward(f, 6, 30.0, chain, p, w);
    CHECK(fd_max_rel(f, g, [&] { return weighted_sum(foot::foot_features(f, 6, 30.0, chain, p), w); }, 400) < kFdTol);
}

TEST_CASE("contact score") {
    const foot::ContactParams p;
    CHECK(foot::contact_score(p.height0, {0, 0, 0}, p) > 0.49);
    CHECK(foot::contact_score(0.0, {0, 0, 0}, p) > 0.9);
    CHECK(foot::contact_score(0.5, {0, 0, 0}, p) < 1e-6);
    CHECK(foot::contact_score(0.0, {2.0, 0, 0}, p) < 1e-6);
}

TEST_CASE("loss gradients match finite differences") {
    const auto& chain = motion::KinematicChain::smpl22();
    const Mat d0 = dance_frames(10, 5);
    Mat pred = d0;
    Rng rng(6);
    for (double& v : pred.data) v += 0.05 * rng.normal();
    losses::LossWeights w;
    w.joint = 1.3;
    w.vel = 0.7;
    w.acc = 0.2;
    w.contact = 3.0;
    Mat g(pred.rows, pred.cols);
    losses::recon_loss(d0, pred, &g, 0.5);
    losses::aux_losses(d0, pred, 5, 30.0, chain, w, &g);
    auto loss = [&] {
        const losses::AuxLosses a = losses::aux_losses(d0, pred, 5, 30.0, chain, w);
        return 0.5 * losses::recon_loss(d0, pred) + w.joint * a.joint + w.vel * a.vel + w.acc * a.acc + w.contact * a.contact;
    };
    CHECK(fd_max_rel(pred, g, loss, 500) < kFdTol);
}

TEST_CASE("auxiliary losses vanish on a perfect prediction and never cross blocks") {
    const auto& chain = motion::KinematicChain::smpl22();
    const Mat d0 = dance_frames(10, 7);
    const losses::AuxLosses a = losses::aux_losses(d0, d0, 5, 30.0, chain, {});
    CHECK(a.joint == 0.0);
    CHECK(a.vel == 0.0);
    CHECK(a.acc == 0.0);
    // Jumps between blocks are not velocities.
    Mat shifted = d0;
    for (std::size_t r = 5; r < 10; ++r) shifted(r, motion::kTransOffset) += 3.0;
    const losses::AuxLosses b = losses::aux_losses(shifted, shifted, 5, 30.0, chain, {});
    CHECK(b.vel == 0.0);
    CHECK_THROWS(losses::aux_losses(d0, d0, 2, 30.0, chain, {}));
}

TEST_CASE("full denoiser backward matches finite differences") {
    for (bool refine : {false, true}) {
        CAPTURE(refine);
        const DenoiserConfig cfg = tiny_config(refine);
        Denoiser net(cfg, 11);
        scramble(net, 12);
        net.set_normalizer(random_normalizer(13));
        const std::size_t B = 2, S = cfg.seq_len, Sc = 3;
        Mat x = net.normalizer().encode(dance_frames(B * S, 14));
        Rng rng(15);
        for (double& v : x.data) v += 0.1 * rng.normal();
        Mat cond = random_mat(B * Sc, cfg.cond_dim, 16);
        DenoiserInput in;
        in.x = &x;
        in.t = {3.0, 41.0};
        in.cond = &cond;
        in.cond_len = Sc;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t s = 0; s < S; ++s) in.pos.push_back(static_cast<double>(s));
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t s = 0; s < Sc; ++s) in.cond_pos.push_back(2.0 * static_cast<double>(s));
        const Mat w = random_mat(B * S, motion::kMotionDim, 17);
        auto loss = [&] { return weighted_sum(net.forward(in), w); };

        auto tape = Denoiser::make_tape();
        const Mat y = net.forward(in, tape.get());
        CHECK(y == net.forward(in));
        const double mag = test::weighted_abs(y, w);
        nn::zero_grads(net.params());
        const DenoiserGrads g = net.backward(*tape, w);
        CHECK(fd_max_rel(x, g.dx, loss, 150, 1, mag) < kFdTol);
        CHECK(fd_max_rel(cond, g.dcond, loss, 30, 2, mag) < kFdTol);
        for (nn::Param* p : net.params()) {
            CAPTURE(p->name);
            CHECK(fd_max_rel(p->value, p->grad, loss, 6, 3, mag) < kFdTol);
        }
    }
}

TEST_CASE("denoiser samples are independent within a batch and copies agree") {
    const DenoiserConfig cfg = tiny_config(true);
    Denoiser net(cfg, 21);
    scramble(net, 22);
    Mat x = random_mat(2 * cfg.seq_len, motion::kMotionDim, 23);
    Mat cond = random_mat(4, cfg.cond_dim, 24);
    DenoiserInput in;
    in.x = &x;
    in.t = {5.0, 6.0};
    in.cond = &cond;
    in.cond_len = 2;
    in.pos.resize(2 * cfg.seq_len, 0.0);
    in.cond_pos = {0, 1, 0, 1};
    const Mat y = net.forward(in);

    Mat x1 = x.slice_rows(0, cfg.seq_len), c1 = cond.slice_rows(0, 2);
    DenoiserInput one = in;
    one.x = &x1;
    one.cond = &c1;
    one.t = {5.0};
    one.pos.resize(cfg.seq_len);
    one.cond_pos = {0, 1};
    CHECK(max_abs_diff(net.forward(one), y.slice_rows(0, cfg.seq_len)) < 1e-12);

    const Denoiser copy = net;
    CHECK(copy.forward(in) == y);
    Mat bad(3, motion::kMotionDim);
    one.x = &bad;
    CHECK_THROWS(net.forward(one));
}

TEST_CASE("discriminator backward matches finite differences") {
    local::Discriminator d(3, 4, 5, 31);
    Rng rng(32);
    for (nn::Param* p : d.params())
        for (double& v : p->value.data) v = 0.3 * rng.normal();
    const std::size_t B = 2, S = 4;
    Mat x = dance_frames(B * S, 33);
    const Mat music = random_mat(B * S, music::kFeatureDim, 34);
    const std::vector<int> genres{2, 0};
    const std::vector<double> w{0.7, -1.3};
    auto loss = [&] {
        local::Discriminator::Ctx c;
        const auto l = d.forward(x, S, genres, music, c);
        return w[0] * l[0] + w[1] * l[1];
    };
    local::Discriminator::Ctx ctx;
    d.forward(x, S, genres, music, ctx);
    nn::zero_grads(d.params());
    const Mat dx = d.backward(ctx, w);
    CHECK(fd_max_rel(x, dx, loss, 200) < kFdTol);
    for (nn::Param* p : d.params()) {
        CAPTURE(p->name);
        CHECK(fd_max_rel(p->value, p->grad, loss, 20) < kFdTol);
    }
}

TEST_CASE("multi-genre adversarial losses and gradients") {
    Mat real(1, 3), fake(1, 3);
    real.data = {0.3, -1.2, 2.0};
    fake.data = {-0.4, 0.9, 0.1};
    std::vector<double> dr, dfd, dfg;
    const local::MgdLosses l = local::mgd_loss(real.data, fake.data, &dr, &dfd, &dfg);
    double disc = 0, gen = 0;
    for (int i = 0; i < 3; ++i) {
        disc += (local::softplus(-real.data[i]) + local::softplus(fake.data[i])) / 3.0;
        gen += local::softplus(-fake.data[i]) / 3.0;
    }
    CHECK(l.disc == doctest::Approx(disc).epsilon(1e-14));
    CHECK(l.gen == doctest::Approx(gen).epsilon(1e-14));
    const Mat gr(1, 3), gfd(1, 3), gfg(1, 3);
    Mat a = gr, b = gfd, c = gfg;
    a.data = dr;
    b.data = dfd;
    c.data = dfg;
    CHECK(fd_max_rel(real, a, [&] { return local::mgd_loss(real.data, fake.data).disc; }) < kFdTol);
    CHECK(fd_max_rel(fake, b, [&] { return local::mgd_loss(real.data, fake.data).disc; }) < kFdTol);
    CHECK(fd_max_rel(fake, c, [&] { return local::mgd_loss(real.data, fake.data).gen; }) < kFdTol);
    CHECK(local::softplus(800.0) == doctest::Approx(800.0));
    CHECK(local::softplus(-800.0) >= 0.0);
}

TEST_CASE("local genre embedding gradient") {
    ModelConfig mc;
    mc.model_dim = 8;
    mc.blocks = 1;
    mc.time_embed_dim = 8;
    mc.genre_embed = 3;
    local::LocalModel m(24, 2, mc, 41);
    const Mat music = random_mat(48, music::kFeatureDim, 42);
    const std::vector<int> genres{1, 0};
    const Mat cond = m.build_cond(music, genres);
    REQUIRE(cond.cols == music::kFeatureDim + 3);
    for (std::size_t r = 0; r < 48; ++r)
        for (std::size_t c = 0; c < music::kFeatureDim; ++c) CHECK(cond(r, c) == music(r, c));
    const Mat w = random_mat(48, cond.cols, 43);
    nn::ParamList ps = m.params();
    nn::Param* embed = ps.back();
    REQUIRE(embed->name == "genre_embed");
    embed->zero_grad();
    m.backward_cond(w, genres);
    CHECK(fd_max_rel(embed->value, embed->grad, [&] { return weighted_sum(m.build_cond(music, genres), w); }) < kFdTol);
}
