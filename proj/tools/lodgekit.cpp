// lodgekit: data generation, two-stage training, long-sequence sampling,
// evaluation and export.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lodge/dataset.hpp"
#include "lodge/metrics.hpp"
#include "lodge/pipeline.hpp"
#include "lodge/primitives.hpp"

namespace fs = std::filesystem;
using namespace lodge;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
};

// Config file, then LODGEKIT_SEED when neither the file nor a flag sets the seed, then flags.
RunConfig resolve(const Common& c) {
    nlohmann::json j = nlohmann::json::object();
    if (!c.config.empty()) {
        std::ifstream f(c.config);
        if (!f) throw ConfigError("cannot open config " + c.config);
        try {
            j = nlohmann::json::parse(f);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config " + c.config + ": " + e.what());
        }
    }
    if (!j.contains("seed") && !c.seed) {
        if (const char* env = std::getenv("LODGEKIT_SEED")) {
            try {
                std::size_t used = 0;
                const unsigned long long v = std::stoull(env, &used);
                if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
                j["seed"] = static_cast<std::uint64_t>(v);
            } catch (const std::exception&) {
                throw ConfigError(std::string("LODGEKIT_SEED is not an unsigned integer: ") + env);
            }
        }
    }
    if (c.seed) j["seed"] = *c.seed;
    if (c.jobs) j["jobs"] = *c.jobs;
    return RunConfig::from_json(j);
}

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "global seed (falls back to the config, then LODGEKIT_SEED)");
    app->add_option("--jobs", c.jobs, "worker threads for segment sampling")->check(CLI::PositiveNumber);
}

pipeline::TrainOptions train_options(bool resume, long log_every) {
    pipeline::TrainOptions o;
    o.resume = resume;
    o.log = [log_every](const train::LossRecord& r) {
        if (log_every > 0 && r.step % log_every == 0) {
            std::fprintf(stderr, "step %6ld  loss %.6f  recon %.6f  joint %.6f  vel %.6f  acc %.6f  contact %.6f\n", r.step,
                         r.total, r.recon, r.joint, r.vel, r.acc, r.contact);
        }
    };
    return o;
}

std::vector<dataset::PairedSample> load_train(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::invalid_argument("data directory " + dir + " does not exist");
    auto pairs = dataset::load_dataset(dir, "train");
    if (pairs.empty()) throw std::invalid_argument("data directory " + dir + " has no training pairs");
    return pairs;
}

// "synth:<frames>,<beat_period>,<genre>,<seed>" or a feature file.
music::MusicFeatureSeq load_music_arg(const std::string& arg, int genres) {
    const std::string prefix = "synth:";
    if (arg.rfind(prefix, 0) != 0) return dataset::read_music(arg);
    std::stringstream ss(arg.substr(prefix.size()));
    std::vector<unsigned long long> v;
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            v.push_back(std::stoull(tok));
        } catch (const std::exception&) {
            throw std::invalid_argument("bad synth music spec '" + arg + "'");
        }
    }
    if (v.size() != 4) throw std::invalid_argument("synth music spec is synth:<frames>,<beat_period>,<genre>,<seed>");
    return music::synth_music(v[0], v[1], static_cast<int>(v[2]), v[3], genres);
}

fs::path sidecar(const fs::path& out, const std::string& suffix) {
    fs::path p = out;
    p.replace_extension(suffix);
    return p;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lodgekit: coarse-to-fine diffusion for long dance sequences"};
    app.require_subcommand(1);

    // gen-data
    Common gd_c;
    std::optional<std::size_t> gd_count, gd_frames, gd_beat;
    std::optional<int> gd_genres;
    std::string gd_out;
    auto* gd = app.add_subcommand("gen-data", "write a synthetic paired dataset");
    add_common(gd, gd_c);
    gd->add_option("--count", gd_count, "number of pairs");
    gd->add_option("--frames", gd_frames, "frames per pair");
    gd->add_option("--beat-period", gd_beat, "frames between beats");
    gd->add_option("--genres", gd_genres, "genre count");
    gd->add_option("--out", gd_out, "output directory")->required();

    // train-global / train-local / finetune
    struct TrainArgs {
        Common c;
        std::string data, out, base;
        std::optional<long> steps;
        bool resume = false;
    };
    TrainArgs tg, tl, ft;
    auto add_train = [&](const char* name, const char* help, TrainArgs& a) {
        auto* s = app.add_subcommand(name, help);
        add_common(s, a.c);
        s->add_option("--data", a.data, "dataset directory")->required();
        s->add_option("--out", a.out, "output directory")->required();
        s->add_option("--steps", a.steps, "optimizer steps");
        s->add_flag("--resume", a.resume, "continue from the checkpoint in --out");
        return s;
    };
    add_train("train-global", "train the global-stage denoiser", tg);
    add_train("train-local", "train the local-stage denoiser", tl);
    auto* ftc = add_train("finetune", "boundary fine-tuning of a local checkpoint", ft);
    ftc->add_option("--local-ckpt", ft.base, "trained local checkpoint")->required()->check(CLI::ExistingFile);

    // sample
    Common sp_c;
    std::string sp_music, sp_global, sp_local, sp_out, sp_sampler;
    int sp_genre = 0;
    std::optional<double> sp_s;
    std::optional<long> sp_steps;
    bool sp_no_augment = false;
    auto* sp = app.add_subcommand("sample", "generate a long motion for a music sequence");
    add_common(sp, sp_c);
    sp->add_option("--music", sp_music, "feature file or synth:<frames>,<beat_period>,<genre>,<seed>")->required();
    sp->add_option("--global-ckpt", sp_global, "global-stage checkpoint")->required()->check(CLI::ExistingFile);
    sp->add_option("--local-ckpt", sp_local, "local-stage checkpoint")->required()->check(CLI::ExistingFile);
    sp->add_option("--genre", sp_genre, "genre id");
    sp->add_option("--s", sp_s, "soft guidance strength in [0, 1]");
    sp->add_option("--sampler", sp_sampler, "ddpm or ddim");
    sp->add_option("--steps", sp_steps, "ddim steps");
    sp->add_flag("--no-augment", sp_no_augment, "uniform soft placement without mirroring");
    sp->add_option("--out", sp_out, "output .ldm file")->required();

    // eval
    Common ev_c;
    std::vector<std::string> ev_motion, ev_music;
    std::string ev_ref, ev_out;
    auto* ev = app.add_subcommand("eval", "metric report against a reference dataset");
    add_common(ev, ev_c);
    ev->add_option("--motion", ev_motion, "generated motion files")->required()->check(CLI::ExistingFile);
    ev->add_option("--music", ev_music, "music file of each motion (needed for BAS)")->check(CLI::ExistingFile);
    ev->add_option("--ref-dir", ev_ref, "reference dataset directory")->required();
    ev->add_option("--out", ev_out, "report .json")->required();

    // export
    std::string ex_motion, ex_format = "csv", ex_out;
    auto* ex = app.add_subcommand("export", "joint positions for external viewers");
    ex->add_option("--motion", ex_motion, "motion file")->required()->check(CLI::ExistingFile);
    ex->add_option("--format", ex_format, "output format (csv)");
    ex->add_option("--out", ex_out, "output .csv")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gd) {
            RunConfig cfg = resolve(gd_c);
            if (gd_count) cfg.data_count = *gd_count;
            if (gd_frames) cfg.data_frames = *gd_frames;
            if (gd_beat) cfg.beat_period = *gd_beat;
            if (gd_genres) cfg.genres = *gd_genres;
            cfg.validate();
            pipeline::gen_data(cfg, gd_out);
            std::printf("wrote %zu pairs to %s\n", cfg.data_count, gd_out.c_str());
        } else if (app.got_subcommand("train-global") || app.got_subcommand("train-local") || *ftc) {
            const bool global = app.got_subcommand("train-global");
            TrainArgs& a = global ? tg : (*ftc ? ft : tl);
            RunConfig cfg = resolve(a.c);
            TrainConfig& tc = global ? cfg.global_train : (*ftc ? cfg.finetune : cfg.local_train);
            if (a.steps) tc.steps = *a.steps;
            cfg.validate();
            const auto pairs = load_train(a.data);
            const auto opt = train_options(a.resume, tc.log_every);
            if (global) {
                pipeline::run_train_global(cfg, pairs, a.out, opt);
            } else if (*ftc) {
                pipeline::run_finetune(cfg, pairs, a.base, a.out, opt);
            } else {
                pipeline::run_train_local(cfg, pairs, a.out, opt);
            }
            std::printf("wrote %s\n", (fs::path(a.out) / (global ? "global.ckpt" : "local.ckpt")).c_str());
        } else if (*sp) {
            RunConfig cfg = resolve(sp_c);
            if (sp_s) cfg.s = *sp_s;
            if (!sp_sampler.empty()) cfg.sampler.kind = sp_sampler;
            if (sp_steps) cfg.sampler.steps = *sp_steps;
            if (sp_no_augment) cfg.augment = false;
            cfg.validate();
            const global::GlobalModel gm = pipeline::load_global(sp_global);
            const local::LocalModel lm = pipeline::load_local(sp_local);
            if (gm.layout().N != cfg.layout.N || gm.layout().n != cfg.layout.n) {
                throw ConfigError("config layout (N=" + std::to_string(cfg.layout.N) + ", n=" + std::to_string(cfg.layout.n) +
                                  ") differs from the global checkpoint");
            }
            const music::MusicFeatureSeq mus = load_music_arg(sp_music, lm.genres());
            if (mus.length() % cfg.layout.N != 0) {
                std::fprintf(stderr, "note: music has %zu frames; trailing %zu frames beyond a multiple of N=%zu are dropped\n",
                             mus.length(), mus.length() % cfg.layout.N, cfg.layout.N);
            }
            const pipeline::SampleResult res = pipeline::sample_long(gm, lm, mus, sp_genre, cfg, cfg.seed);
            const fs::path out = sp_out;
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            dataset::write_motion(out, res.motion, sp_genre);
            write_primitives(sidecar(out, ".prims"), res.placed);
            const auto& chain = motion::KinematicChain::smpl22();
            const music::MusicFeatureSeq used{mus.feats.slice_rows(0, res.motion.length()), mus.fps};
            nlohmann::json report{{"frames", res.motion.length()},
                                  {"segments", res.spec.segments()},
                                  {"soft_windows", res.spec.soft_windows.size()},
                                  {"soft_dropped", res.spec.dropped.size()},
                                  {"FSR", metrics::foot_skating_ratio(res.motion, chain)}};
            if (!music::beat_indices(used).empty()) report["BAS"] = metrics::beat_align_score(res.motion, used, chain, cfg.bas_sigma);
            pipeline::write_report(sidecar(out, ".metrics.json"), report);
            write_config_file(sidecar(out, ".config.json"), cfg,
                              {{"command", "sample"}, {"music", sp_music}, {"genre", sp_genre}, {"global_ckpt", sp_global}, {"local_ckpt", sp_local}});
            std::printf("wrote %s (%zu frames)\n", out.c_str(), res.motion.length());
        } else if (*ev) {
            RunConfig cfg = resolve(ev_c);
            if (ev_music.empty()) throw metrics::MetricError("eval: BAS requires --music for every --motion");
            if (ev_music.size() != ev_motion.size()) throw metrics::MetricError("eval: give one --music per --motion");
            std::vector<motion::MotionSeq> motions;
            std::vector<music::MusicFeatureSeq> musics;
            for (const auto& m : ev_motion) motions.push_back(dataset::read_motion(m));
            for (const auto& m : ev_music) musics.push_back(dataset::read_music(m));
            if (!fs::is_directory(ev_ref)) throw std::invalid_argument("reference directory " + ev_ref + " does not exist");
            std::vector<motion::MotionSeq> refs;
            for (auto& p : dataset::load_dataset(ev_ref)) refs.push_back(std::move(p.dance));
            const nlohmann::json report = pipeline::evaluate(motions, &musics, refs, cfg);
            pipeline::write_report(ev_out, report);
            write_config_file(sidecar(ev_out, ".config.json"), cfg, {{"command", "eval"}, {"motion", ev_motion}, {"music", ev_music}, {"ref_dir", ev_ref}});
            std::cout << report.dump(2) << "\n";
        } else if (*ex) {
            if (ex_format != "csv") throw std::invalid_argument("unknown export format '" + ex_format + "' (supported: csv)");
            const motion::MotionSeq seq = dataset::read_motion(ex_motion);
            const fs::path out = ex_out;
            pipeline::export_csv(seq, out, sidecar(out, ".skeleton.json"));
            std::printf("wrote %s (%zu rows)\n", out.c_str(), seq.length() * motion::kJoints);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
