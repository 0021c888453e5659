#include "lodge/local_stage.hpp"

#include <cmath>

#include "lodge/container.hpp"
#include "lodge/foot.hpp"
#include "lodge/rng.hpp"

namespace lodge::local {

FootRefineState contact_score(const motion::MotionSeq& seq, const motion::KinematicChain& chain, const foot::ContactParams& p) {
    seq.validate();
    if (seq.length() < 2) throw motion::InvalidMotion("contact_score: need at least 2 frames");
    const Mat f = foot::foot_features(seq.frames, seq.length(), seq.fps, chain, p);
    FootRefineState s{Mat(f.rows, 12), Mat(f.rows, 12), Mat(f.rows, 4)};
    for (std::size_t r = 0; r < f.rows; ++r) {
        for (std::size_t k = 0; k < 4; ++k) {
            for (std::size_t a = 0; a < 3; ++a) {
                s.position(r, 3 * k + a) = f(r, 7 * k + a);
                s.velocity(r, 3 * k + a) = f(r, 7 * k + 3 + a);
            }
            s.score(r, k) = f(r, 7 * k + 6);
        }
    }
    return s;
}

// ---------------------------------------------------------------------------

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

MgdLosses mgd_loss(const std::vector<double>& real, const std::vector<double>& fake, std::vector<double>* dreal,
                   std::vector<double>* dfake_disc, std::vector<double>* dfake_gen) {
    if (real.empty() || fake.empty()) throw std::invalid_argument("mgd_loss: empty batch");
    MgdLosses out;
    const double nr = static_cast<double>(real.size()), nf = static_cast<double>(fake.size());
    if (dreal) dreal->assign(real.size(), 0.0);
    if (dfake_disc) dfake_disc->assign(fake.size(), 0.0);
    if (dfake_gen) dfake_gen->assign(fake.size(), 0.0);
    for (std::size_t i = 0; i < real.size(); ++i) {
        out.disc += softplus(-real[i]) / nr;
        if (dreal) (*dreal)[i] = -foot::sigmoid(-real[i]) / nr;
    }
    for (std::size_t i = 0; i < fake.size(); ++i) {
        out.disc += softplus(fake[i]) / nf;
        out.gen += softplus(-fake[i]) / nf;
        if (dfake_disc) (*dfake_disc)[i] = foot::sigmoid(fake[i]) / nf;
        if (dfake_gen) (*dfake_gen)[i] = -foot::sigmoid(-fake[i]) / nf;
    }
    return out;
}

Discriminator::Discriminator(int genres, std::size_t embed, std::size_t hidden, std::uint64_t seed) {
    if (genres < 1 || embed == 0 || hidden == 0) throw std::invalid_argument("discriminator sizes must be positive");
    Rng rng(derive_seed(seed, {0xD15C}));
    frame_ = nn::Linear("disc.frame", motion::kMotionDim, hidden, rng);
    mix_ = nn::Linear("disc.mix", hidden + embed + music::kFeatureDim, hidden, rng);
    head_ = nn::Linear("disc.head", hidden, 1, rng);
    embed_ = nn::Param("disc.genre", rng.normal_mat(static_cast<std::size_t>(genres), embed));
}

std::vector<double> Discriminator::forward(const Mat& x, std::size_t seq, const std::vector<int>& genres, const Mat& music,
                                           Ctx& ctx) const {
    const std::size_t B = genres.size();
    require_shape(x, B * seq, motion::kMotionDim, "discriminator input");
    require_shape(music, B * seq, music::kFeatureDim, "discriminator music");
    const std::size_t H = frame_.out(), E = embed_.value.cols;
    ctx.x = x;
    ctx.seq = seq;
    ctx.genres = genres;
    ctx.h1_pre = frame_.forward(x);
    ctx.h1 = nn::gelu(ctx.h1_pre);
    ctx.z = Mat(B, H + E + music::kFeatureDim);
    const double inv = 1.0 / static_cast<double>(seq);
    for (std::size_t b = 0; b < B; ++b) {
        const int g = genres[b];
        if (g < 0 || g >= this->genres()) throw std::invalid_argument("discriminator: genre out of range");
        for (std::size_t r = b * seq; r < (b + 1) * seq; ++r) {
            for (std::size_t c = 0; c < H; ++c) ctx.z(b, c) += ctx.h1(r, c) * inv;
            for (std::size_t c = 0; c < music::kFeatureDim; ++c) ctx.z(b, H + E + c) += music(r, c) * inv;
        }
        for (std::size_t c = 0; c < E; ++c) ctx.z(b, H + c) = embed_.value(static_cast<std::size_t>(g), c);
    }
    ctx.h2_pre = mix_.forward(ctx.z);
    ctx.h2 = nn::gelu(ctx.h2_pre);
    const Mat logit = head_.forward(ctx.h2);
    return logit.data;
}

Mat Discriminator::backward(const Ctx& ctx, const std::vector<double>& dlogit) {
    const std::size_t B = ctx.genres.size(), H = frame_.out(), E = embed_.value.cols;
    if (dlogit.size() != B) throw ShapeError("discriminator backward: one gradient per sample");
    Mat dl(B, 1);
    dl.data = dlogit;
    const Mat dh2 = head_.backward(ctx.h2, dl);
    const Mat dz = mix_.backward(ctx.z, nn::gelu_backward(ctx.h2_pre, dh2));
    Mat dh1(ctx.h1.rows, H);
    const double inv = 1.0 / static_cast<double>(ctx.seq);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t r = b * ctx.seq; r < (b + 1) * ctx.seq; ++r)
            for (std::size_t c = 0; c < H; ++c) dh1(r, c) = dz(b, c) * inv;
        const auto g = static_cast<std::size_t>(ctx.genres[b]);
        for (std::size_t c = 0; c < E; ++c) embed_.grad(g, c) += dz(b, H + c);
    }
    return frame_.backward(ctx.x, nn::gelu_backward(ctx.h1_pre, dh1));
}

nn::ParamList Discriminator::params() {
    nn::ParamList ps;
    frame_.collect(ps);
    mix_.collect(ps);
    head_.collect(ps);
    ps.push_back(&embed_);
    return ps;
}

// ---------------------------------------------------------------------------

namespace {

DenoiserConfig local_config(std::size_t n, const ModelConfig& mc) {
    DenoiserConfig c;
    c.model_dim = mc.model_dim;
    c.blocks = mc.blocks;
    c.time_embed_dim = mc.time_embed_dim;
    c.mlp_ratio = mc.mlp_ratio;
    c.cond_dim = music::kFeatureDim + mc.genre_embed;
    c.seq_len = n;
    c.cond_encoder = false;
    c.foot_refine = mc.foot_refine;
    return c;
}

std::vector<double> local_positions(std::size_t n, std::size_t B) {
    std::vector<double> p(n * B);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(i % n);
    return p;
}

}  // namespace

LocalModel::LocalModel(std::size_t n, int genres, const ModelConfig& mc, std::uint64_t seed)
    : n_(n), net_(local_config(n, mc), derive_seed(seed, {0x10CA1})) {
    if (n < 3 * kPrimitiveFrames) throw std::invalid_argument("local window must be at least 24 frames");
    if (genres < 1 || mc.genre_embed == 0) throw std::invalid_argument("local model needs at least one genre and a nonzero embedding");
    Rng rng(derive_seed(seed, {0x6E4E}));
    genre_embed_ = nn::Param("genre_embed", rng.normal_mat(static_cast<std::size_t>(genres), mc.genre_embed));
}

Mat LocalModel::build_cond(const Mat& music, const std::vector<int>& genres) const {
    const std::size_t B = genres.size(), E = genre_embed_.value.cols;
    require_shape(music, B * n_, music::kFeatureDim, "local music");
    Mat c(B * n_, music::kFeatureDim + E);
    for (std::size_t b = 0; b < B; ++b) {
        if (genres[b] < 0 || genres[b] >= this->genres()) throw std::invalid_argument("genre id " + std::to_string(genres[b]) + " out of range");
        const auto g = static_cast<std::size_t>(genres[b]);
        for (std::size_t r = b * n_; r < (b + 1) * n_; ++r) {
            for (std::size_t k = 0; k < music::kFeatureDim; ++k) c(r, k) = music(r, k);
            for (std::size_t k = 0; k < E; ++k) c(r, music::kFeatureDim + k) = genre_embed_.value(g, k);
        }
    }
    return c;
}

void LocalModel::backward_cond(const Mat& dcond, const std::vector<int>& genres) {
    const std::size_t E = genre_embed_.value.cols;
    require_shape(dcond, genres.size() * n_, music::kFeatureDim + E, "local dcond");
    for (std::size_t b = 0; b < genres.size(); ++b) {
        const auto g = static_cast<std::size_t>(genres[b]);
        for (std::size_t r = b * n_; r < (b + 1) * n_; ++r)
            for (std::size_t k = 0; k < E; ++k) genre_embed_.grad(g, k) += dcond(r, music::kFeatureDim + k);
    }
}

nn::ParamList LocalModel::params() {
    nn::ParamList ps = net_.params();
    ps.push_back(&genre_embed_);
    return ps;
}

diffusion::X0Model LocalModel::segment_model(const Mat& music, int genre) const {
    auto cond = std::make_shared<const Mat>(build_cond(music, {genre}));
    auto pos = std::make_shared<const std::vector<double>>(local_positions(n_, 1));
    const Denoiser* net = &net_;
    const std::size_t n = n_;
    return [net, cond, pos, n](const Mat& x, long t) {
        DenoiserInput in;
        in.x = &x;
        in.t = {static_cast<double>(t)};
        in.cond = cond.get();
        in.cond_len = n;
        in.pos = *pos;
        in.cond_pos = *pos;
        return net->forward(in);
    };
}

void LocalModel::save(ckpt::Checkpoint& c) const {
    c.meta["stage"] = "local";
    c.meta["layout"] = {{"n", n_}};
    c.meta["genres"] = genres();
    c.meta["denoiser"] = net_.config().to_json();
    put_normalizer(c, net_.normalizer());
}

LocalModel LocalModel::from_checkpoint(const ckpt::Checkpoint& c) {
    if (c.meta.value("stage", "") != "local") throw io::HeaderError("not a local-stage checkpoint");
    LocalModel m;
    m.n_ = c.meta.at("layout").at("n").get<std::size_t>();
    m.net_ = Denoiser(DenoiserConfig::from_json(c.meta.at("denoiser")), 0);
    const DenoiserConfig& dc = m.net_.config();
    if (dc.seq_len != m.n_ || dc.cond_dim <= music::kFeatureDim) throw io::HeaderError("local checkpoint: layout and model disagree");
    const int G = c.meta.at("genres").get<int>();
    if (G < 1) throw io::HeaderError("local checkpoint: bad genre count");
    m.genre_embed_ = nn::Param("genre_embed", Mat(static_cast<std::size_t>(G), dc.cond_dim - music::kFeatureDim));
    const nn::ParamList ps = m.params();
    ckpt::get_params(c, c.has("ema/" + ps.front()->name) ? "ema/" : "param/", ps);
    m.net_.set_normalizer(get_normalizer(c));
    return m;
}

// ---------------------------------------------------------------------------

Mat boundary_mix(const Mat& xt, const Mat& d0, std::size_t n) {
    if (!xt.same_shape(d0)) throw ShapeError("boundary_mix: shape mismatch");
    if (n < 2 * kHalfPrimitive + 1) throw std::invalid_argument("boundary_mix: window shorter than 9 frames");
    if (xt.rows % n != 0) throw ShapeError("boundary_mix: rows must be a multiple of n");
    Mat out = xt;
    for (std::size_t b = 0; b < xt.rows / n; ++b) {
        for (std::size_t i = 0; i < kHalfPrimitive; ++i) {
            for (std::size_t r : {b * n + i, b * n + n - 1 - i})
                std::copy(d0.row(r).begin(), d0.row(r).end(), out.row(r).begin());
        }
    }
    return out;
}

namespace {

void run(const LocalTrainer& tr, const std::vector<dataset::PairedSample>& pairs, const diffusion::NoiseSchedule& sched,
         const TrainConfig& cfg, const losses::LossWeights& w, std::uint64_t seed, bool boundaries, const LogFn& log) {
    if (!tr.model || !tr.state) throw std::invalid_argument("local trainer needs a model and a state");
    if (pairs.empty()) throw std::invalid_argument("train_local: empty dataset");
    w.validate();
    LocalModel& model = *tr.model;
    const std::size_t n = model.n();
    for (const auto& p : pairs) {
        if (p.dance.length() < n) throw std::invalid_argument("train_local: sample " + p.id + " is shorter than one local window");
        if (p.genre < 0 || p.genre >= model.genres()) throw std::invalid_argument("train_local: sample " + p.id + " has an unknown genre");
    }
    const bool mgd = w.genre > 0.0;
    if (mgd && (!tr.disc || !tr.disc_state)) throw std::invalid_argument("train_local: genre weight needs a discriminator");

    const auto& chain = motion::KinematicChain::smpl22();
    // Auxiliary terms on per-frame differences, so acceleration does not swamp the rest.
    constexpr double fps = 1.0;
    const std::uint64_t tag = boundaries ? 0xF17E : 0x10CA;
    const Normalizer& norm = model.net().normalizer();
    auto tape = Denoiser::make_tape();
    const std::vector<double> pos = local_positions(n, cfg.batch);
    while (tr.state->step < cfg.steps) {
        Rng rng(derive_seed(seed, {tag, static_cast<std::uint64_t>(tr.state->step)}));
        const std::size_t B = cfg.batch;
        Mat x0(B * n, motion::kMotionDim), z(B * n, motion::kMotionDim), xt(B * n, motion::kMotionDim);
        Mat mus(B * n, music::kFeatureDim);
        std::vector<int> genres;
        DenoiserInput in;
        for (std::size_t b = 0; b < B; ++b) {
            const dataset::PairedSample& p = pairs[rng.below(pairs.size())];
            const std::size_t off = rng.below(p.dance.length() - n + 1);
            const auto t = static_cast<long>(rng.below(static_cast<std::uint64_t>(sched.T)));
            const Mat d0 = p.dance.frames.slice_rows(off, n);
            const Mat z0 = norm.encode(d0);
            x0.set_rows(b * n, d0);
            z.set_rows(b * n, z0);
            xt.set_rows(b * n, diffusion::q_sample(sched, z0, t, rng.normal_mat(n, motion::kMotionDim)));
            mus.set_rows(b * n, p.music.feats.slice_rows(off, n));
            genres.push_back(p.genre);
            in.t.push_back(static_cast<double>(t));
        }
        if (boundaries) xt = boundary_mix(xt, z, n);
        const Mat cond = model.build_cond(mus, genres);
        in.x = &xt;
        in.cond = &cond;
        in.cond_len = n;
        in.pos = pos;
        in.cond_pos = pos;
        const Mat pred = model.net().forward(in, tape.get());

        Mat dpred(pred.rows, pred.cols);
        train::LossRecord rec;
        rec.step = tr.state->step;
        rec.recon = losses::recon_loss(z, pred, &dpred);
        const Mat raw = norm.decode(pred);
        Mat draw(pred.rows, pred.cols);
        const losses::AuxLosses aux = losses::aux_losses(x0, raw, n, fps, chain, w, &draw);
        rec.joint = aux.joint;
        rec.vel = aux.vel;
        rec.acc = aux.acc;
        rec.contact = aux.contact;

        Discriminator::Ctx dctx;
        if (mgd) {
            nn::zero_grads(tr.disc->params());
            const std::vector<double> fake = tr.disc->forward(raw, n, genres, mus, dctx);
            std::vector<double> dgen;
            rec.genre = mgd_loss(fake, fake, nullptr, nullptr, &dgen).gen;
            for (double& v : dgen) v *= w.genre;
            add_inplace(draw, tr.disc->backward(dctx, dgen));
        }
        add_inplace(dpred, norm.backward(draw));
        rec.total = losses::total_loss(rec.recon, aux, rec.genre, w);

        nn::zero_grads(tr.state->params);
        const DenoiserGrads g = model.net().backward(*tape, dpred);
        model.backward_cond(g.dcond, genres);
        tr.state->apply(cfg);

        if (mgd) {
            nn::zero_grads(tr.disc_state->params);
            Discriminator::Ctx real_ctx, fake_ctx;
            const std::vector<double> lr = tr.disc->forward(x0, n, genres, mus, real_ctx);
            const std::vector<double> lf = tr.disc->forward(raw, n, genres, mus, fake_ctx);
            std::vector<double> dr, df;
            rec.disc = mgd_loss(lr, lf, &dr, &df).disc;
            tr.disc->backward(real_ctx, dr);
            tr.disc->backward(fake_ctx, df);
            tr.disc_state->apply(cfg);
        }
        tr.state->log.push_back(rec);
        if (log) log(rec);
    }
}

}  // namespace

void train_local(const LocalTrainer& tr, const std::vector<dataset::PairedSample>& pairs, const diffusion::NoiseSchedule& sched,
                 const TrainConfig& cfg, const losses::LossWeights& weights, std::uint64_t seed, const LogFn& log) {
    run(tr, pairs, sched, cfg, weights, seed, false, log);
}

void finetune_boundaries(const LocalTrainer& tr, const std::vector<dataset::PairedSample>& pairs,
                         const diffusion::NoiseSchedule& sched, const TrainConfig& cfg, const losses::LossWeights& weights,
                         double acc_boost, std::uint64_t seed, const LogFn& log) {
    if (!(acc_boost >= 0.0)) throw std::invalid_argument("finetune: acceleration boost must be non-negative");
    if (tr.model && tr.model->n() < 2 * kHalfPrimitive + 1) throw std::invalid_argument("finetune: window shorter than 9 frames");
    losses::LossWeights w = weights;
    w.acc *= acc_boost;
    run(tr, pairs, sched, cfg, w, seed, true, log);
}

}  // namespace lodge::local
