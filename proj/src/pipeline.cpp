#include "lodge/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>

#include "lodge/checkpoint.hpp"
#include "lodge/container.hpp"
#include "lodge/metrics.hpp"
#include "lodge/rng.hpp"

namespace lodge::pipeline {

std::vector<dataset::PairedSample> synthetic_set(const RunConfig& cfg, std::vector<std::string>* splits) {
    std::vector<dataset::PairedSample> out;
    if (splits) splits->clear();
    for (std::size_t i = 0; i < cfg.data_count; ++i) {
        const int genre = static_cast<int>(i % static_cast<std::size_t>(cfg.genres));
        dataset::PairedSample p = dataset::generate_synthetic_pair(cfg.data_frames, cfg.beat_period, genre,
                                                                   derive_seed(cfg.seed, {0xDA7A, i}), cfg.genres);
        char id[32];
        std::snprintf(id, sizeof id, "pair_%04zu", i);
        p.id = id;
        out.push_back(std::move(p));
        if (splits) splits->push_back(i % 5 == 4 ? "test" : "train");
    }
    return out;
}

void gen_data(const RunConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    std::vector<std::string> splits;
    const auto pairs = synthetic_set(cfg, &splits);
    dataset::write_dataset(out_dir, pairs, splits);
    write_config_echo(out_dir, cfg, {{"command", "gen-data"}});
}

Normalizer fit_normalizer(const std::vector<dataset::PairedSample>& pairs) {
    std::vector<const Mat*> frames;
    for (const auto& p : pairs) frames.push_back(&p.dance.frames);
    if (frames.empty()) throw std::invalid_argument("fit_normalizer: no training pairs");
    return lodge::fit_normalizer(frames);
}

// ---------------------------------------------------------------------------

namespace {

diffusion::NoiseSchedule schedule_of(const RunConfig& cfg) { return diffusion::make_schedule(cfg.T, cfg.schedule); }

// Stops at every checkpoint_every steps to write the checkpoint.
template <typename Step>
void run_in_chunks(const TrainConfig& cfg, train::TrainState& state, Step step, const std::function<void()>& save) {
    const long every = cfg.checkpoint_every > 0 ? cfg.checkpoint_every : std::max(cfg.steps, 1L);
    bool saved = false;
    while (state.step < cfg.steps) {
        TrainConfig chunk = cfg;
        chunk.steps = std::min(cfg.steps, (state.step / every + 1) * every);
        step(chunk);
        save();
        saved = true;
    }
    if (!saved) save();
}

void check_meta(const ckpt::Checkpoint& c, const RunConfig& cfg, const std::string& phase) {
    if (c.meta.value("phase", "") != phase) throw io::HeaderError("checkpoint phase is '" + c.meta.value("phase", "") + "', expected '" + phase + "'");
    if (c.meta.value("seed", std::uint64_t{0}) != cfg.seed) throw ConfigError("resume: checkpoint was trained with a different seed");
}

}  // namespace

void run_train_global(const RunConfig& cfg, const std::vector<dataset::PairedSample>& pairs, const fs::path& out_dir,
                      const TrainOptions& opt) {
    cfg.validate();
    const SegmentLayout layout{cfg.layout.N, cfg.layout.n, 1};
    const auto examples = global::build_examples(pairs, layout);
    if (examples.empty()) throw std::invalid_argument("train-global: no training pair is as long as one global window (" + std::to_string(layout.N) + " frames)");
    fs::create_directories(out_dir);
    const fs::path ck = out_dir / "global.ckpt";

    global::GlobalModel model(layout, cfg.model, derive_seed(cfg.seed, {0x61}));
    train::TrainState state;
    state.attach(model.net().params());
    if (opt.resume && fs::exists(ck)) {
        const ckpt::Checkpoint c = ckpt::load(ck);
        check_meta(c, cfg, "global");
        state.load(c, "");
        model.net().set_normalizer(get_normalizer(c));
    } else {
        model.net().set_normalizer(fit_normalizer(pairs));
    }
    const auto sched = schedule_of(cfg);
    auto save = [&] {
        ckpt::Checkpoint c;
        model.save(c);
        c.meta["phase"] = "global";
        c.meta["seed"] = cfg.seed;
        state.save(c, "");
        ckpt::save(ck, c);
        train::write_loss_csv(out_dir / "loss.csv", state.log);
    };
    run_in_chunks(cfg.global_train, state, [&](const TrainConfig& chunk) {
        global::train_global(model, state, examples, sched, chunk, cfg.weights, derive_seed(cfg.seed, {0x62}), opt.log);
    }, save);
    write_config_echo(out_dir, cfg, {{"command", "train-global"}, {"examples", examples.size()}});
}

namespace {

void local_run(const RunConfig& cfg, const std::vector<dataset::PairedSample>& pairs, const fs::path& out_dir,
               const TrainOptions& opt, const fs::path* base) {
    cfg.validate();
    if (pairs.empty()) throw std::invalid_argument("no training pairs");
    fs::create_directories(out_dir);
    const fs::path ck = out_dir / "local.ckpt";
    const bool fine = base != nullptr;
    const std::string phase = fine ? "finetune" : "local";
    const TrainConfig& tc = fine ? cfg.finetune : cfg.local_train;

    local::LocalModel model;
    if (fine) {
        model = load_local(*base);
        if (model.n() != cfg.layout.n) throw ConfigError("finetune: checkpoint window differs from layout.n");
    } else {
        model = local::LocalModel(cfg.layout.n, cfg.genres, cfg.model, derive_seed(cfg.seed, {0x71}));
        model.net().set_normalizer(fit_normalizer(pairs));
    }
    local::Discriminator disc(model.genres(), cfg.model.genre_embed, cfg.model.disc_hidden, derive_seed(cfg.seed, {0x72}));
    train::TrainState state, dstate;
    state.attach(model.params());
    dstate.attach(disc.params());
    if (opt.resume && fs::exists(ck)) {
        const ckpt::Checkpoint c = ckpt::load(ck);
        check_meta(c, cfg, phase);
        state.load(c, "");
        model.net().set_normalizer(get_normalizer(c));
        if (c.has("disc.param/" + dstate.params.front()->name)) dstate.load(c, "disc.");
    }
    const auto sched = schedule_of(cfg);
    auto save = [&] {
        ckpt::Checkpoint c;
        model.save(c);
        c.meta["phase"] = phase;
        c.meta["seed"] = cfg.seed;
        state.save(c, "");
        if (cfg.weights.genre > 0.0) dstate.save(c, "disc.");
        ckpt::save(ck, c);
        train::write_loss_csv(out_dir / "loss.csv", state.log);
    };
    local::LocalTrainer tr{&model, &state, &disc, &dstate};
    run_in_chunks(tc, state, [&](const TrainConfig& chunk) {
        if (fine) {
            local::finetune_boundaries(tr, pairs, sched, chunk, cfg.weights, cfg.finetune_acc_boost, derive_seed(cfg.seed, {0x74}), opt.log);
        } else {
            local::train_local(tr, pairs, sched, chunk, cfg.weights, derive_seed(cfg.seed, {0x73}), opt.log);
        }
    }, save);
    nlohmann::json extra{{"command", fine ? "finetune" : "train-local"}, {"pairs", pairs.size()}};
    if (fine) extra["base"] = base->string();
    write_config_echo(out_dir, cfg, extra);
}

}  // namespace

void run_train_local(const RunConfig& cfg, const std::vector<dataset::PairedSample>& pairs, const fs::path& out_dir,
                     const TrainOptions& opt) {
    local_run(cfg, pairs, out_dir, opt, nullptr);
}

void run_finetune(const RunConfig& cfg, const std::vector<dataset::PairedSample>& pairs, const fs::path& local_ckpt,
                  const fs::path& out_dir, const TrainOptions& opt) {
    local_run(cfg, pairs, out_dir, opt, &local_ckpt);
}

global::GlobalModel load_global(const fs::path& path) { return global::GlobalModel::from_checkpoint(ckpt::load(path)); }
local::LocalModel load_local(const fs::path& path) { return local::LocalModel::from_checkpoint(ckpt::load(path)); }

// ---------------------------------------------------------------------------

namespace {

void clamp_contacts(Mat& frames) {
    for (std::size_t r = 0; r < frames.rows; ++r)
        for (std::size_t c = 0; c < motion::kContactDim; ++c) frames(r, c) = std::clamp(frames(r, c), 0.0, 1.0);
}

}  // namespace

SampleResult sample_long(const global::GlobalModel& gm, const local::LocalModel& lm, const music::MusicFeatureSeq& music,
                         int genre, const RunConfig& cfg, std::uint64_t seed) {
    music.validate();
    const std::size_t N = gm.layout().N, n = gm.layout().n;
    if (lm.n() != n) throw ConfigError("global and local checkpoints use different segment lengths");
    if (genre < 0 || genre >= lm.genres()) throw std::invalid_argument("genre " + std::to_string(genre) + " outside the trained genres");
    const std::size_t k = music.length() / N;
    if (k == 0) throw std::invalid_argument("music has " + std::to_string(music.length()) + " frames, fewer than one global window of " + std::to_string(N));
    const music::MusicFeatureSeq trimmed{music.feats.slice_rows(0, k * N), music.fps};
    const auto sched = schedule_of(cfg);

    SampleResult res;
    res.generated = global::generate_long(gm, trimmed, k, sched, cfg.sampler, derive_seed(seed, {1}));
    res.placed = cfg.augment ? global::augment_primitives(res.generated, trimmed, motion::KinematicChain::smpl22())
                             : global::place_uniform(res.generated);
    for (auto* list : {&res.placed.hard, &res.placed.soft})
        for (auto& p : *list) clamp_contacts(p.motion);
    res.spec = guidance::build_guidance(res.placed, cfg.s);

    // The local model samples in its own normalized space.
    const Normalizer& norm = lm.net().normalizer();
    guidance::GuidanceSpec model_spec = res.spec;
    for (Mat& v : model_spec.value) v = norm.encode(v);
    std::vector<guidance::SegmentJob> jobs;
    for (std::size_t j = 0; j < res.spec.segments(); ++j) {
        jobs.push_back({lm.segment_model(trimmed.feats.slice_rows(j * n, n), genre), derive_seed(seed, {2, j})});
    }
    const std::vector<Mat> segs = guidance::guided_sample(sched, cfg.sampler.kind, cfg.sampler.steps, jobs, &model_spec, n, cfg.jobs);
    Mat frames = norm.decode(guidance::stitch_segments(segs));
    clamp_contacts(frames);
    // Rows that end the sampler replaced by guidance carry the exact values,
    // not their encode/decode round trip.
    const diffusion::TimestepPlan plan = diffusion::make_plan(cfg.sampler.kind, sched.T, cfg.sampler.steps);
    const bool soft_last = guidance::soft_active(plan.t.back(), sched.T, res.spec.s);
    for (std::size_t j = 0; j < res.spec.segments(); ++j) {
        for (std::size_t r = 0; r < n; ++r) {
            if (!res.spec.is_hard_row(r) && !(soft_last && res.spec.row_mask[j][r])) continue;
            std::copy(res.spec.value[j].row(r).begin(), res.spec.value[j].row(r).end(), frames.row(j * n + r).begin());
        }
    }
    res.motion = motion::MotionSeq(std::move(frames), music.fps);
    res.motion.validate();
    return res;
}

// ---------------------------------------------------------------------------

std::vector<motion::MotionSeq> windows(const motion::MotionSeq& seq, std::size_t window) {
    if (window < 3) throw std::invalid_argument("feature window must be at least 3 frames");
    std::vector<motion::MotionSeq> out;
    if (seq.length() <= window) {
        out.push_back(seq);
        return out;
    }
    for (std::size_t off = 0; off + window <= seq.length(); off += window)
        out.emplace_back(seq.frames.slice_rows(off, window), seq.fps);
    return out;
}

nlohmann::json evaluate(const std::vector<motion::MotionSeq>& motions, const std::vector<music::MusicFeatureSeq>* musics,
                        const std::vector<motion::MotionSeq>& refs, const RunConfig& cfg) {
    if (motions.empty()) throw metrics::MetricError("eval: no motions");
    if (refs.empty()) throw metrics::MetricError("eval: empty reference set");
    if (!musics) throw metrics::MetricError("eval: BAS needs the music of every motion");
    if (musics->size() != motions.size()) throw metrics::MetricError("eval: one music file per motion is required");
    const auto& chain = motion::KinematicChain::smpl22();
    auto feats = [&](const std::vector<motion::MotionSeq>& set, std::vector<std::vector<double>>& fk, std::vector<std::vector<double>>& fg) {
        for (const auto& m : set) {
            for (const auto& w : windows(m, cfg.metric_window)) {
                fk.push_back(metrics::kinetic_features(w, chain));
                fg.push_back(metrics::geometric_features(w, chain));
            }
        }
    };
    std::vector<std::vector<double>> gk, gg, rk, rg;
    feats(motions, gk, gg);
    feats(refs, rk, rg);
    double bas = 0.0, fsr = 0.0;
    for (std::size_t i = 0; i < motions.size(); ++i) {
        if ((*musics)[i].length() < motions[i].length()) throw metrics::MetricError("eval: music shorter than its motion");
        const music::MusicFeatureSeq mus{(*musics)[i].feats.slice_rows(0, motions[i].length()), (*musics)[i].fps};
        bas += metrics::beat_align_score(motions[i], mus, chain, cfg.bas_sigma);
        fsr += metrics::foot_skating_ratio(motions[i], chain);
    }
    const double count = static_cast<double>(motions.size());
    return {
        {"FID_k", metrics::fid(metrics::compute_stats(gk), metrics::compute_stats(rk))},
        {"FID_g", metrics::fid(metrics::compute_stats(gg), metrics::compute_stats(rg))},
        {"Div_k", metrics::diversity(gk)},
        {"Div_g", metrics::diversity(gg)},
        {"BAS", bas / count},
        {"FSR", fsr / count},
        {"motions", motions.size()},
        {"windows", gk.size()},
        {"ref_windows", rk.size()},
    };
}

void write_report(const fs::path& path, const nlohmann::json& report) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    f << report.dump(2) << "\n";
    if (!f) throw io::FormatError("cannot write report " + path.string());
}

// ---------------------------------------------------------------------------

const std::array<const char*, motion::kJoints>& joint_names() {
    static const std::array<const char*, motion::kJoints> names = {
        "pelvis", "l_hip", "r_hip", "spine1", "l_knee", "r_knee", "spine2", "l_ankle", "r_ankle", "spine3", "l_toe",
        "r_toe", "neck", "l_collar", "r_collar", "head", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist"};
    return names;
}

void export_csv(const motion::MotionSeq& seq, const fs::path& csv, const fs::path& skeleton) {
    seq.validate();
    const auto& chain = motion::KinematicChain::smpl22();
    const motion::JointPositions P = motion::forward_kinematics(seq, chain);
    if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
    std::ofstream f(csv);
    f << "frame,joint,x,y,z\n" << std::setprecision(9);
    for (std::size_t r = 0; r < P.length(); ++r) {
        for (std::size_t j = 0; j < motion::kJoints; ++j) {
            const motion::Vec3 p = P.at(r, j);
            f << r << ',' << j << ',' << p[0] << ',' << p[1] << ',' << p[2] << '\n';
        }
    }
    if (!f) throw io::FormatError("cannot write " + csv.string());
    nlohmann::json joints = nlohmann::json::array();
    for (std::size_t j = 0; j < motion::kJoints; ++j) {
        joints.push_back({{"index", j}, {"name", joint_names()[j]}, {"parent", chain.parent[j]},
                          {"offset", {chain.rest_offset[j][0], chain.rest_offset[j][1], chain.rest_offset[j][2]}}});
    }
    std::ofstream s(skeleton);
    s << nlohmann::json{{"up_axis", "+y"}, {"units", "m"}, {"fps", seq.fps}, {"joints", joints}}.dump(2) << "\n";
    if (!s) throw io::FormatError("cannot write " + skeleton.string());
}

}  // namespace lodge::pipeline
