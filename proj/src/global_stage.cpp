#include "lodge/global_stage.hpp"

#include <algorithm>

#include "lodge/container.hpp"
#include "lodge/rng.hpp"

namespace lodge::global {

Mat pool_music(const Mat& feats) {
    if (feats.rows == 0 || feats.rows % kPool != 0) throw std::invalid_argument("pool_music: frame count must be a positive multiple of 8");
    Mat out(feats.rows / kPool, feats.cols);
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t i = 0; i < kPool; ++i)
            for (std::size_t c = 0; c < feats.cols; ++c) out(r, c) += feats(r * kPool + i, c);
        for (std::size_t c = 0; c < feats.cols; ++c) out(r, c) /= static_cast<double>(kPool);
    }
    return out;
}

std::vector<double> pooled_positions(std::size_t rows) {
    std::vector<double> p(rows);
    for (std::size_t r = 0; r < rows; ++r) p[r] = static_cast<double>(r * kPool) + 0.5 * static_cast<double>(kPool - 1);
    return p;
}

std::size_t slot_count(const SegmentLayout& layout) { return 3 * layout.l() + 1; }

std::vector<long> soft_targets(const music::MusicFeatureSeq& window, std::size_t count) {
    std::vector<std::size_t> ranked = music::rank_beats(window);
    if (ranked.size() > count) ranked.resize(count);
    std::vector<long> out(ranked.begin(), ranked.end());
    const std::vector<long> extra = dataset::uniform_targets(count - out.size(), window.length(), out);
    out.insert(out.end(), extra.begin(), extra.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> slot_positions(const SegmentLayout& layout, const std::vector<long>& soft) {
    if (soft.size() != 2 * layout.l()) throw std::invalid_argument("slot_positions: need 2l soft targets");
    std::vector<double> pos;
    auto add = [&](long center) {
        const std::size_t s = window_start(center, layout.N);
        for (std::size_t i = 0; i < kPrimitiveFrames; ++i) pos.push_back(static_cast<double>(s + i));
    };
    for (std::size_t j = 0; j <= layout.l(); ++j) add(static_cast<long>(j * layout.n));
    for (long c : soft) add(c);
    return pos;
}

Mat primitive_sequence(const PrimitiveSet& ps) {
    Mat out(kPrimitiveFrames * (ps.hard.size() + ps.soft.size()), motion::kMotionDim);
    std::size_t r = 0;
    for (const auto* list : {&ps.hard, &ps.soft}) {
        for (const auto& p : *list) {
            out.set_rows(r, p.motion);
            r += kPrimitiveFrames;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {
DenoiserConfig global_config(const SegmentLayout& layout, const ModelConfig& mc) {
    DenoiserConfig c;
    c.model_dim = mc.model_dim;
    c.blocks = mc.blocks;
    c.time_embed_dim = mc.time_embed_dim;
    c.mlp_ratio = mc.mlp_ratio;
    c.cond_dim = music::kFeatureDim;
    c.seq_len = slot_count(layout) * kPrimitiveFrames;
    c.cond_encoder = true;
    c.foot_refine = false;
    return c;
}
}  // namespace

GlobalModel::GlobalModel(const SegmentLayout& layout, const ModelConfig& mc, std::uint64_t seed)
    : layout_{layout.N, layout.n, 1}, net_(global_config(layout, mc), derive_seed(seed, {0x610BA1})) {
    layout_.validate();
    if (layout_.N % kPool != 0) throw std::invalid_argument("global window must be a multiple of 8 frames");
}

Mat GlobalModel::downsample(const Mat& window_feats) const {
    require_shape(window_feats, layout_.N, music::kFeatureDim, "downsample");
    const Mat pooled = pool_music(window_feats);
    return net_.encode_cond(pooled, pooled.rows, pooled_positions(pooled.rows));
}

void GlobalModel::save(ckpt::Checkpoint& c) const {
    c.meta["stage"] = "global";
    c.meta["layout"] = {{"N", layout_.N}, {"n", layout_.n}};
    c.meta["denoiser"] = net_.config().to_json();
    put_normalizer(c, net_.normalizer());
}

GlobalModel GlobalModel::from_checkpoint(const ckpt::Checkpoint& c) {
    if (c.meta.value("stage", "") != "global") throw io::HeaderError("not a global-stage checkpoint");
    GlobalModel m;
    m.layout_ = SegmentLayout{c.meta.at("layout").at("N").get<std::size_t>(), c.meta.at("layout").at("n").get<std::size_t>(), 1};
    m.layout_.validate();
    m.net_ = Denoiser(DenoiserConfig::from_json(c.meta.at("denoiser")), 0);
    if (m.net_.config().seq_len != slot_count(m.layout_) * kPrimitiveFrames) throw io::HeaderError("global checkpoint: layout and model disagree");
    ckpt::get_params(c, c.has("ema/" + m.net_.params().front()->name) ? "ema/" : "param/", m.net_.params());
    m.net_.set_normalizer(get_normalizer(c));
    return m;
}

// ---------------------------------------------------------------------------

std::vector<GlobalExample> build_examples(const std::vector<dataset::PairedSample>& pairs, const SegmentLayout& layout) {
    std::vector<GlobalExample> out;
    for (const auto& p : pairs) {
        if (p.dance.length() < layout.N) continue;
        for (std::size_t off = 0; off + layout.N <= p.dance.length(); off += layout.n) {
            const motion::MotionSeq dance(p.dance.frames.slice_rows(off, layout.N), p.dance.fps);
            const music::MusicFeatureSeq mus{p.music.feats.slice_rows(off, layout.N), p.music.fps};
            const PrimitiveSet ps = dataset::extract_key_motions(dance, layout, mus);
            std::vector<long> soft;
            for (const auto& s : ps.soft) soft.push_back(s.target_frame);
            out.push_back({primitive_sequence(ps), slot_positions(layout, soft), pool_music(mus.feats)});
        }
    }
    return out;
}

void train_global(GlobalModel& model, train::TrainState& state, const std::vector<GlobalExample>& examples,
                  const diffusion::NoiseSchedule& sched, const TrainConfig& cfg, const losses::LossWeights& weights,
                  std::uint64_t seed, const LogFn& log) {
    if (examples.empty()) throw std::invalid_argument("train_global: no training examples");
    const std::size_t S = model.net().config().seq_len;
    const std::size_t Sc = examples.front().cond.rows;
    losses::LossWeights w = weights;
    w.contact = 0.0;
    w.genre = 0.0;
    const auto& chain = motion::KinematicChain::smpl22();
    const Normalizer& norm = model.net().normalizer();
    auto tape = Denoiser::make_tape();
    while (state.step < cfg.steps) {
        Rng rng(derive_seed(seed, {0x6770, static_cast<std::uint64_t>(state.step)}));
        const std::size_t B = cfg.batch;
        Mat x0(B * S, motion::kMotionDim), z(B * S, motion::kMotionDim), xt(B * S, motion::kMotionDim);
        Mat cond(B * Sc, music::kFeatureDim);
        DenoiserInput in;
        for (std::size_t b = 0; b < B; ++b) {
            const GlobalExample& ex = examples[rng.below(examples.size())];
            const auto t = static_cast<long>(rng.below(static_cast<std::uint64_t>(sched.T)));
            const Mat eps = rng.normal_mat(S, motion::kMotionDim);
            const Mat z0 = norm.encode(ex.x0);
            x0.set_rows(b * S, ex.x0);
            z.set_rows(b * S, z0);
            xt.set_rows(b * S, diffusion::q_sample(sched, z0, t, eps));
            cond.set_rows(b * Sc, ex.cond);
            in.t.push_back(static_cast<double>(t));
            in.pos.insert(in.pos.end(), ex.pos.begin(), ex.pos.end());
            const auto cp = pooled_positions(Sc);
            in.cond_pos.insert(in.cond_pos.end(), cp.begin(), cp.end());
        }
        in.x = &xt;
        in.cond = &cond;
        in.cond_len = Sc;
        const Mat pred = model.net().forward(in, tape.get());
        Mat dpred(pred.rows, pred.cols);
        train::LossRecord rec;
        rec.step = state.step;
        rec.recon = losses::recon_loss(z, pred, &dpred);
        Mat draw(pred.rows, pred.cols);
        // Per-frame differences, as in the local stage.
        const losses::AuxLosses aux = losses::aux_losses(x0, norm.decode(pred), kPrimitiveFrames, 1.0, chain, w, &draw);
        add_inplace(dpred, norm.backward(draw));
        rec.joint = aux.joint;
        rec.vel = aux.vel;
        rec.acc = aux.acc;
        rec.total = losses::total_loss(rec.recon, aux, 0.0, w);
        nn::zero_grads(state.params);
        model.net().backward(*tape, dpred);
        state.apply(cfg);
        state.log.push_back(rec);
        if (log) log(rec);
    }
}

// ---------------------------------------------------------------------------

PrimitiveSet generate_primitives(const GlobalModel& model, const music::MusicFeatureSeq& window,
                                 const diffusion::NoiseSchedule& sched, const SamplerConfig& sampler, std::uint64_t seed) {
    const SegmentLayout& layout = model.layout();
    require_shape(window.feats, layout.N, music::kFeatureDim, "generate_primitives");
    const std::size_t l = layout.l();
    const std::vector<long> soft = soft_targets(window, 2 * l);
    const Mat cond = pool_music(window.feats);
    DenoiserInput in;
    in.cond = &cond;
    in.cond_len = cond.rows;
    in.cond_pos = pooled_positions(cond.rows);
    in.pos = slot_positions(layout, soft);
    const std::size_t S = model.net().config().seq_len;
    auto fn = [&](const Mat& x, long t) {
        DenoiserInput call = in;
        call.x = &x;
        call.t = {static_cast<double>(t)};
        return model.net().forward(call);
    };
    Rng rng(derive_seed(seed, {0x5A3B}));
    Mat start = rng.normal_mat(S, motion::kMotionDim);
    const Mat seq = model.net().normalizer().decode(diffusion::run_sampler(sched, sampler.kind, sampler.steps, fn, std::move(start), rng));

    PrimitiveSet ps;
    ps.layout = SegmentLayout{layout.N, layout.n, 1};
    for (std::size_t j = 0; j <= l; ++j) {
        DancePrimitive p;
        p.kind = PrimitiveKind::hard;
        p.target_frame = static_cast<long>(j * layout.n);
        p.motion = seq.slice_rows(j * kPrimitiveFrames, kPrimitiveFrames);
        ps.hard.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < 2 * l; ++i) {
        DancePrimitive p;
        p.kind = PrimitiveKind::soft;
        p.target_frame = soft[i];
        p.strength = window.feats(static_cast<std::size_t>(soft[i]), music::kOnset);
        p.motion = seq.slice_rows((l + 1 + i) * kPrimitiveFrames, kPrimitiveFrames);
        ps.soft.push_back(std::move(p));
    }
    return ps;
}

PrimitiveSet generate_long(const GlobalModel& model, const music::MusicFeatureSeq& music, std::size_t windows,
                           const diffusion::NoiseSchedule& sched, const SamplerConfig& sampler, std::uint64_t seed) {
    const SegmentLayout& layout = model.layout();
    if (windows < 1 || music.length() < windows * layout.N) throw std::invalid_argument("generate_long: music shorter than the requested windows");
    PrimitiveSet all;
    all.layout = SegmentLayout{layout.N, layout.n, windows};
    for (std::size_t w = 0; w < windows; ++w) {
        const music::MusicFeatureSeq win{music.feats.slice_rows(w * layout.N, layout.N), music.fps};
        PrimitiveSet ps = generate_primitives(model, win, sched, sampler, derive_seed(seed, {w}));
        const long off = static_cast<long>(w * layout.N);
        for (std::size_t j = (w == 0 ? 0 : 1); j < ps.hard.size(); ++j) {
            ps.hard[j].target_frame += off;
            all.hard.push_back(std::move(ps.hard[j]));
        }
        for (auto& s : ps.soft) {
            s.target_frame += off;
            all.soft.push_back(std::move(s));
        }
    }
    all.sort_soft();
    all.validate();
    return all;
}

namespace {

// Soft primitives whose target lies in window w.
std::vector<std::size_t> soft_in_window(const PrimitiveSet& ps, std::size_t w) {
    std::vector<std::size_t> idx;
    const auto lo = static_cast<long>(w * ps.layout.N), hi = static_cast<long>((w + 1) * ps.layout.N);
    for (std::size_t i = 0; i < ps.soft.size(); ++i)
        if (ps.soft[i].target_frame >= lo && ps.soft[i].target_frame < hi) idx.push_back(i);
    return idx;
}

}  // namespace

PrimitiveSet augment_primitives(const PrimitiveSet& ps, const music::MusicFeatureSeq& music, const motion::KinematicChain& chain) {
    const SegmentLayout& layout = ps.layout;
    if (music.length() < layout.frames()) throw std::invalid_argument("augment_primitives: music shorter than the primitive layout");
    PrimitiveSet out;
    out.layout = layout;
    out.hard = ps.hard;
    for (std::size_t w = 0; w < layout.k; ++w) {
        const long off = static_cast<long>(w * layout.N);
        const music::MusicFeatureSeq win{music.feats.slice_rows(w * layout.N, layout.N), music.fps};
        const std::vector<std::size_t> ranked = music::rank_beats(win);
        const std::vector<std::size_t> idx = soft_in_window(ps, w);

        std::vector<long> used;
        auto onset = [&](long local) { return win.feats(static_cast<std::size_t>(local), music::kOnset); };
        // Originals: snap to the nearest unused beat (ties to the earlier one).
        std::vector<DancePrimitive> originals;
        for (std::size_t i : idx) {
            DancePrimitive p = ps.soft[i];
            const long local = p.target_frame - off;
            long best = -1;
            for (std::size_t b : ranked) {
                const auto bl = static_cast<long>(b);
                if (std::find(used.begin(), used.end(), bl) != used.end()) continue;
                if (best < 0 || std::abs(bl - local) < std::abs(best - local) || (std::abs(bl - local) == std::abs(best - local) && bl < best)) best = bl;
            }
            const long t = best >= 0 ? best : local;
            used.push_back(t);
            p.target_frame = t + off;
            p.strength = onset(t);
            originals.push_back(std::move(p));
        }
        // Mirrored copies: next-ranked unused beats, in temporal order.
        std::vector<long> next;
        for (std::size_t b : ranked) {
            if (next.size() == originals.size()) break;
            const auto bl = static_cast<long>(b);
            if (std::find(used.begin(), used.end(), bl) == used.end()) next.push_back(bl);
        }
        std::vector<long> taken = used;
        taken.insert(taken.end(), next.begin(), next.end());
        const std::vector<long> fill = dataset::uniform_targets(originals.size() - next.size(), layout.N, taken);
        next.insert(next.end(), fill.begin(), fill.end());
        std::sort(next.begin(), next.end());
        for (std::size_t i = 0; i < originals.size(); ++i) {
            DancePrimitive m = originals[i];
            m.motion = motion::mirror_frames(originals[i].motion, chain);
            m.target_frame = next[i] + off;
            m.strength = onset(next[i]);
            out.soft.push_back(std::move(m));
        }
        for (auto& p : originals) out.soft.push_back(std::move(p));
    }
    out.sort_soft();
    return out;
}

PrimitiveSet place_uniform(const PrimitiveSet& ps) {
    PrimitiveSet out;
    out.layout = ps.layout;
    out.hard = ps.hard;
    for (std::size_t w = 0; w < ps.layout.k; ++w) {
        const std::vector<std::size_t> idx = soft_in_window(ps, w);
        const std::vector<long> centers = dataset::uniform_targets(idx.size(), ps.layout.N, {});
        for (std::size_t i = 0; i < idx.size(); ++i) {
            DancePrimitive p = ps.soft[idx[i]];
            p.target_frame = centers[i] + static_cast<long>(w * ps.layout.N);
            p.strength = 0.0;
            out.soft.push_back(std::move(p));
        }
    }
    out.sort_soft();
    return out;
}

}  // namespace lodge::global
