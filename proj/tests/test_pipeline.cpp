#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <unistd.h>

#include "lodge/metrics.hpp"
#include "lodge/pipeline.hpp"
#include "support.hpp"

using namespace lodge;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
    RunConfig c = RunConfig::from_json(nlohmann::json::parse(R"({
        "layout": {"N": 128, "n": 32},
        "diffusion": {"T": 20},
        "sampler": {"kind": "ddim", "steps": 5},
        "model": {"model_dim": 16, "blocks": 1, "time_embed_dim": 8, "genre_embed": 4, "disc_hidden": 8},
        "train": {"global": {"steps": 6, "batch": 2, "log_every": 1},
                  "local": {"steps": 6, "batch": 2, "log_every": 1},
                  "finetune": {"steps": 4, "batch": 2, "log_every": 1}},
        "data": {"count": 6, "frames": 128, "beat_period": 16},
        "seed": 11
    })"));
    c.validate();
    return c;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lodgekit_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("config json round trip and overlay") {
    const RunConfig d;
    CHECK(RunConfig::from_json(d.to_json()).to_json() == d.to_json());
    const RunConfig c = RunConfig::from_json(nlohmann::json::parse(R"({"guidance": {"s": 0.25}, "seed": 9})"));
    CHECK(c.s == 0.25);
    CHECK(c.seed == 9);
    CHECK(c.layout.N == d.layout.N);
    CHECK(c.T == d.T);
}

TEST_CASE("config rejects unknown keys, wrong types and bad values") {
    using nlohmann::json;
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"sedd": 1})")), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"model": {"dim": 4}})")), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"layout": {"N": "big"}})")), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"diffusion": {"schedule": "sigmoid"}})")), ConfigError);
    auto bad = [](auto edit) {
        RunConfig c;
        edit(c);
        CHECK_THROWS_AS(c.validate(), ConfigError);
    };
    bad([](RunConfig& c) { c.s = 1.5; });
    bad([](RunConfig& c) { c.layout.n = 300; });
    bad([](RunConfig& c) { c.layout.N = 1020; c.layout.n = 255; });
    bad([](RunConfig& c) { c.sampler.kind = "euler"; });
    bad([](RunConfig& c) { c.sampler = {"ddim", 0}; });
    bad([](RunConfig& c) { c.local_train.lr = 0; });
    bad([](RunConfig& c) { c.local_train.optimizer = "sgd"; });
    bad([](RunConfig& c) { c.model.model_dim = 15; });
    bad([](RunConfig& c) { c.jobs = 0; });
    bad([](RunConfig& c) { c.data_frames = 20; });
}

TEST_CASE("synthetic set splits and genres") {
    RunConfig c = tiny_config();
    c.data_count = 10;
    std::vector<std::string> splits;
    const auto pairs = pipeline::synthetic_set(c, &splits);
    REQUIRE(pairs.size() == 10);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(pairs[i].genre == static_cast<int>(i) % c.genres);
        CHECK(splits[i] == (i % 5 == 4 ? "test" : "train"));
        CHECK(pairs[i].dance.length() == c.data_frames);
    }
    const auto again = pipeline::synthetic_set(c);
    CHECK(again[3].dance.frames.data == pairs[3].dance.frames.data);
}

TEST_CASE("resumed training matches an uninterrupted run byte for byte") {
    const RunConfig c = tiny_config();
    const auto pairs = pipeline::synthetic_set(c);
    const fs::path a = scratch("resume_a"), b = scratch("resume_b");

    pipeline::run_train_local(c, pairs, a);
    pipeline::run_train_global(c, pairs, a);

    RunConfig half = c;
    half.local_train.steps = 3;
    half.global_train.steps = 2;
    pipeline::run_train_local(half, pairs, b);
    pipeline::run_train_global(half, pairs, b);
    pipeline::run_train_local(c, pairs, b, {true, {}});
    pipeline::run_train_global(c, pairs, b, {true, {}});

    CHECK(bytes(a / "local.ckpt") == bytes(b / "local.ckpt"));
    CHECK(bytes(a / "global.ckpt") == bytes(b / "global.ckpt"));
    CHECK(bytes(a / "loss.csv") == bytes(b / "loss.csv"));

    pipeline::run_finetune(c, pairs, a / "local.ckpt", a / "ft");
    half.finetune.steps = 2;
    pipeline::run_finetune(half, pairs, a / "local.ckpt", b / "ft");
    pipeline::run_finetune(c, pairs, a / "local.ckpt", b / "ft", {true, {}});
    CHECK(bytes(a / "ft" / "local.ckpt") == bytes(b / "ft" / "local.ckpt"));

    RunConfig other = c;
    other.seed = 12;
    CHECK_THROWS_AS(pipeline::run_train_local(other, pairs, b, {true, {}}), ConfigError);
}

TEST_CASE("long sampling: shape, pinned rows and determinism") {
    RunConfig c = tiny_config();
    const auto pairs = pipeline::synthetic_set(c);
    const fs::path dir = scratch("sample");
    pipeline::run_train_local(c, pairs, dir);
    pipeline::run_train_global(c, pairs, dir);
    const auto gm = pipeline::load_global(dir / "global.ckpt");
    const auto lm = pipeline::load_local(dir / "local.ckpt");
    const music::MusicFeatureSeq mus = dataset::generate_synthetic_pair(300, 16, 1, 4, c.genres).music;

    const auto res = pipeline::sample_long(gm, lm, mus, 1, c, 77);
    REQUIRE(res.motion.length() == 256);  // trimmed to 2 windows of 128
    CHECK(res.generated.hard.size() == 2 * 4 + 1);
    CHECK(res.spec.segments() == 8);
    for (std::size_t j = 0; j < res.spec.segments(); ++j) {
        for (std::size_t r = 0; r < c.layout.n; ++r) {
            if (!res.spec.row_mask[j][r]) continue;
            const auto got = res.motion.frames.row(j * c.layout.n + r);
            const auto want = res.spec.value[j].row(r);
            CHECK(std::equal(got.begin(), got.end(), want.begin()));
        }
    }
    for (std::size_t r = 0; r < res.motion.length(); ++r)
        for (std::size_t ch = 0; ch < motion::kContactDim; ++ch) {
            CHECK(res.motion.frames(r, ch) >= 0.0);
            CHECK(res.motion.frames(r, ch) <= 1.0);
        }

    const auto again = pipeline::sample_long(gm, lm, mus, 1, c, 77);
    CHECK(again.motion.frames.data == res.motion.frames.data);
    RunConfig par = c;
    par.jobs = 3;
    CHECK(pipeline::sample_long(gm, lm, mus, 1, par, 77).motion.frames.data == res.motion.frames.data);
    CHECK(pipeline::sample_long(gm, lm, mus, 1, c, 78).motion.frames.data != res.motion.frames.data);

    const music::MusicFeatureSeq short_mus{mus.feats.slice_rows(0, 100), mus.fps};
    CHECK_THROWS_AS(pipeline::sample_long(gm, lm, short_mus, 1, c, 77), std::invalid_argument);
    CHECK_THROWS_AS(pipeline::sample_long(gm, lm, mus, 7, c, 77), std::invalid_argument);
}

TEST_CASE("evaluation report and windows") {
    RunConfig c = tiny_config();
    c.metric_window = 64;
    const auto pairs = pipeline::synthetic_set(c);
    CHECK(pipeline::windows(pairs[0].dance, 64).size() == 2);
    CHECK(pipeline::windows(pairs[0].dance, 500).size() == 1);
    std::vector<motion::MotionSeq> gen, refs;
    std::vector<music::MusicFeatureSeq> mus;
    for (std::size_t i = 0; i < 3; ++i) {
        gen.push_back(pairs[i].dance);
        mus.push_back(pairs[i].music);
    }
    for (std::size_t i = 3; i < pairs.size(); ++i) refs.push_back(pairs[i].dance);
    const auto rep = pipeline::evaluate(gen, &mus, refs, c);
    for (const char* k : {"FID_k", "FID_g", "Div_k", "Div_g", "BAS", "FSR"}) {
        REQUIRE(rep.contains(k));
        CHECK(std::isfinite(rep[k].get<double>()));
    }
    CHECK(rep["BAS"].get<double>() > 0.0);
    CHECK_THROWS_AS(pipeline::evaluate(gen, nullptr, refs, c), metrics::MetricError);
    CHECK_THROWS_AS(pipeline::evaluate(gen, &mus, {}, c), metrics::MetricError);
}

TEST_CASE("csv export") {
    const fs::path dir = scratch("export");
    const motion::MotionSeq s = motion::MotionSeq::rest(3);
    pipeline::export_csv(s, dir / "m.csv", dir / "skel.json");
    std::ifstream f(dir / "m.csv");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(f, line)) ++lines;
    CHECK(lines == 1 + 3 * motion::kJoints);
    const auto skel = nlohmann::json::parse(std::ifstream(dir / "skel.json"));
    CHECK(skel["joints"].size() == motion::kJoints);
    CHECK(skel["joints"][0]["parent"] == -1);
}
