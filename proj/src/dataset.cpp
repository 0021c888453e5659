#include "lodge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "lodge/container.hpp"
#include "lodge/rng.hpp"

namespace lodge {

void SegmentLayout::validate() const {
    if (n < kPrimitiveFrames) throw std::invalid_argument("layout: n must be at least 8");
    if (N == 0 || N % n != 0) throw std::invalid_argument("layout: n must divide N");
    if (k < 1) throw std::invalid_argument("layout: k must be at least 1");
}

void PrimitiveSet::sort_soft() {
    std::stable_sort(soft.begin(), soft.end(),
                     [](const DancePrimitive& a, const DancePrimitive& b) { return a.target_frame < b.target_frame; });
}

void PrimitiveSet::validate() const {
    layout.validate();
    if (hard.size() != layout.segments() + 1) throw std::invalid_argument("primitive set: wrong hard count");
    const auto total = static_cast<long>(layout.frames());
    for (const auto* list : {&hard, &soft}) {
        for (const auto& p : *list) {
            require_shape(p.motion, kPrimitiveFrames, motion::kMotionDim, "primitive");
            if (p.target_frame < 0 || p.target_frame > total) throw std::invalid_argument("primitive target out of range");
        }
    }
    for (std::size_t j = 0; j < hard.size(); ++j) {
        if (hard[j].target_frame != static_cast<long>(j * layout.n)) {
            throw std::invalid_argument("primitive set: hard targets must be j*n");
        }
    }
    for (std::size_t i = 1; i < soft.size(); ++i) {
        if (soft[i].target_frame < soft[i - 1].target_frame) throw std::invalid_argument("primitive set: soft not sorted");
    }
}

std::size_t window_start(long center, std::size_t length) {
    const long hi = static_cast<long>(length) - static_cast<long>(kPrimitiveFrames);
    return static_cast<std::size_t>(std::clamp(center - static_cast<long>(kHalfPrimitive), 0L, std::max(hi, 0L)));
}

void write_primitives(const std::filesystem::path& path, const PrimitiveSet& ps) {
    nlohmann::json header{{"kind", "primitives"}, {"N", ps.layout.N}, {"n", ps.layout.n}, {"k", ps.layout.k}};
    nlohmann::json entries = nlohmann::json::array();
    Mat all(kPrimitiveFrames * (ps.hard.size() + ps.soft.size()), motion::kMotionDim);
    std::size_t row = 0;
    for (const auto* list : {&ps.hard, &ps.soft}) {
        for (const auto& p : *list) {
            entries.push_back({{"kind", p.kind == PrimitiveKind::hard ? "hard" : "soft"},
                               {"target_frame", p.target_frame},
                               {"strength", p.strength}});
            all.set_rows(row, p.motion);
            row += kPrimitiveFrames;
        }
    }
    header["primitives"] = entries;
    io::write_matrix(path, header, all, io::Dtype::f32);
}

PrimitiveSet read_primitives(const std::filesystem::path& path) {
    const io::Container c = io::read_container(path);
    if (c.header.value("kind", "") != "primitives") throw io::HeaderError("not a primitives file");
    const Mat all = io::container_matrix(c);
    PrimitiveSet ps;
    ps.layout = SegmentLayout{c.header.at("N").get<std::size_t>(), c.header.at("n").get<std::size_t>(),
                              c.header.at("k").get<std::size_t>()};
    const auto& entries = c.header.at("primitives");
    if (all.cols != motion::kMotionDim || all.rows != entries.size() * kPrimitiveFrames) {
        throw io::HeaderError("primitives header disagrees with payload");
    }
    std::size_t row = 0;
    for (const auto& e : entries) {
        DancePrimitive p;
        p.motion = all.slice_rows(row, kPrimitiveFrames);
        row += kPrimitiveFrames;
        p.target_frame = e.at("target_frame").get<long>();
        p.strength = e.value("strength", 0.0);
        p.kind = e.at("kind").get<std::string>() == "hard" ? PrimitiveKind::hard : PrimitiveKind::soft;
        (p.kind == PrimitiveKind::hard ? ps.hard : ps.soft).push_back(std::move(p));
    }
    return ps;
}

}  // namespace lodge

namespace lodge::dataset {

using motion::Mat3;
using motion::Vec3;

void PairedSample::validate() const {
    music.validate();
    dance.validate();
    if (music.length() != dance.length()) throw std::invalid_argument("paired sample: length mismatch");
    if (music.fps != dance.fps) throw std::invalid_argument("paired sample: fps mismatch");
}

namespace {

using Pose = std::array<Vec3, motion::kJoints>;  // per-joint (x, y, z) Euler angles

Mat3 euler(const Vec3& a) { return motion::mul(motion::rot_z(a[2]), motion::mul(motion::rot_y(a[1]), motion::rot_x(a[0]))); }

double genre_amplitude(int genre) { return 0.6 + 0.2 * static_cast<double>(genre % 4); }

// Upper body and root orientation library for one genre.
std::vector<Pose> genre_library(int genre) {
    namespace J = motion::joint;
    Rng rng(derive_seed(0x11B2A7, {static_cast<std::uint64_t>(genre)}));
    const double a = genre_amplitude(genre);
    std::vector<Pose> lib(6);
    for (Pose& p : lib) {
        p = {};
        auto u = [&](double lo, double hi) { return rng.uniform(lo, hi); };
        p[J::pelvis] = {u(-0.12, 0.12) * a, u(-0.6, 0.6) * a, u(-0.1, 0.1) * a};
        for (int j : {J::spine1, J::spine2, J::spine3}) p[static_cast<std::size_t>(j)] = {u(-0.15, 0.15) * a, u(-0.2, 0.2) * a, u(-0.12, 0.12) * a};
        p[J::neck] = {u(-0.2, 0.2) * a, u(-0.2, 0.2) * a, u(-0.1, 0.1) * a};
        p[J::head] = {u(-0.3, 0.3) * a, u(-0.3, 0.3) * a, u(-0.15, 0.15) * a};
        p[J::l_collar] = {0.0, 0.0, u(-0.2, 0.2) * a};
        p[J::r_collar] = {0.0, 0.0, u(-0.2, 0.2) * a};
        p[J::l_shoulder] = {u(-0.5, 0.5) * a, u(-0.8, 0.8) * a, u(-1.3, 1.3) * a};
        p[J::r_shoulder] = {u(-0.5, 0.5) * a, u(-0.8, 0.8) * a, u(-1.3, 1.3) * a};
        p[J::l_elbow] = {0.0, u(-1.8, 0.0) * a, 0.0};
        p[J::r_elbow] = {0.0, u(0.0, 1.8) * a, 0.0};
        p[J::l_wrist] = {u(-0.4, 0.4), u(-0.4, 0.4), u(-0.4, 0.4)};
        p[J::r_wrist] = {u(-0.4, 0.4), u(-0.4, 0.4), u(-0.4, 0.4)};
    }
    return lib;
}

void set_legs(Pose& p, bool left_stance, double a, Rng& rng) {
    namespace J = motion::joint;
    const int stance_hip = left_stance ? J::l_hip : J::r_hip;
    const int stance_knee = left_stance ? J::l_knee : J::r_knee;
    const int stance_ankle = left_stance ? J::l_ankle : J::r_ankle;
    const int swing_hip = left_stance ? J::r_hip : J::l_hip;
    const int swing_knee = left_stance ? J::r_knee : J::l_knee;
    const int swing_ankle = left_stance ? J::r_ankle : J::l_ankle;
    const double side = left_stance ? -1.0 : 1.0;  // abduct the swing leg outward
    p[static_cast<std::size_t>(stance_hip)] = {-0.05 * a, 0.0, 0.0};
    p[static_cast<std::size_t>(stance_knee)] = {0.1, 0.0, 0.0};
    p[static_cast<std::size_t>(stance_ankle)] = {-0.05, 0.0, 0.0};
    const double hip = -(0.4 + 0.3 * rng.uniform()) * a;
    const double knee = 0.7 + 0.5 * rng.uniform();
    p[static_cast<std::size_t>(swing_hip)] = {hip, 0.0, side * rng.uniform(0.0, 0.15)};
    p[static_cast<std::size_t>(swing_knee)] = {knee, 0.0, 0.0};
    p[static_cast<std::size_t>(swing_ankle)] = {0.2, 0.0, 0.0};
}

std::array<double, 2> root_curve(int genre, double u) {
    constexpr double r = 0.3;
    const double th = 2.0 * std::numbers::pi * u;
    switch (genre % 4) {
        case 0: return {r * std::sin(th), r * (1.0 - std::cos(th))};
        case 1: return {1.3 * r * std::sin(th), 0.6 * r * (1.0 - std::cos(th))};
        case 2: return {r * std::sin(th), r * std::sin(th) * std::cos(th)};
        default: return {r * (std::sin(th) + 0.3 * std::sin(2.0 * th)), r * (0.8 * (1.0 - std::cos(th)) + 0.2 * std::sin(3.0 * th))};
    }
}

double ease(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace

PairedSample generate_synthetic_pair(std::size_t length, std::size_t beat_period, int genre, std::uint64_t seed,
                                     int genre_count) {
    if (beat_period < 8) throw std::invalid_argument("beat period must be at least 8 frames");
    if (length < 2 * beat_period) throw std::invalid_argument("clip must span at least two beat periods");
    music::GenreLabel{genre}.validate(genre_count);

    PairedSample s;
    s.genre = genre;
    s.id = "g" + std::to_string(genre) + "_s" + std::to_string(seed);
    s.music = music::synth_music(length, beat_period, genre, seed, genre_count);

    const std::vector<Pose> lib = genre_library(genre);
    const double amp = genre_amplitude(genre);
    Rng rng(derive_seed(seed, {0xDA4CE, static_cast<std::uint64_t>(genre)}));

    // Anchors at every beat, plus one before the clip and enough after it.
    const auto B = static_cast<long>(beat_period);
    std::vector<long> anchors;
    for (long b = B / 2 - B; b < static_cast<long>(length) + B; b += B) anchors.push_back(b);
    std::vector<Pose> poses(anchors.size());
    std::vector<double> progress(anchors.size());
    std::size_t prev = lib.size();
    for (std::size_t k = 0; k < anchors.size(); ++k) {
        std::size_t pick = static_cast<std::size_t>(rng.below(lib.size() - 1));
        if (prev < lib.size() && pick >= prev) ++pick;
        prev = pick;
        poses[k] = lib[pick];
        for (auto& ang : poses[k])
            for (double& v : ang) v += rng.uniform(-0.1, 0.1);
        set_legs(poses[k], k % 2 == 0, amp, rng);
        progress[k] = static_cast<double>(k) / static_cast<double>(anchors.size() - 1);
    }

    const auto& chain = motion::KinematicChain::smpl22();
    motion::MotionSeq dance(Mat(length, motion::kMotionDim));
    for (std::size_t f = 0; f < length; ++f) {
        std::size_t k = 0;
        while (k + 2 < anchors.size() && anchors[k + 1] <= static_cast<long>(f)) ++k;
        const double w = ease(static_cast<double>(static_cast<long>(f) - anchors[k]) / static_cast<double>(B));
        for (std::size_t j = 0; j < motion::kJoints; ++j) {
            Vec3 ang;
            for (std::size_t i = 0; i < 3; ++i) ang[i] = poses[k][j][i] + (poses[k + 1][j][i] - poses[k][j][i]) * w;
            dance.set_rotation(f, j, euler(ang));
        }
        const double u = progress[k] + (progress[k + 1] - progress[k]) * w;
        const auto xz = root_curve(genre, u);
        dance.set_root_translation(f, {xz[0], 0.0, xz[1]});
    }
    // Ground the lowest foot joint at 1 cm and label contacts from height.
    const Mat pos = motion::fk_positions(dance.frames, chain);
    for (std::size_t f = 0; f < length; ++f) {
        double lowest = 1e9;
        for (int fj : chain.foot_joints) lowest = std::min(lowest, pos(f, 3 * static_cast<std::size_t>(fj) + 1));
        const double lift = 0.01 - lowest;
        dance.frames(f, motion::kTransOffset + 1) = lift;
        for (std::size_t c = 0; c < 4; ++c) {
            const double h = pos(f, 3 * static_cast<std::size_t>(chain.foot_joints[c]) + 1) + lift;
            dance.frames(f, c) = h < 0.05 ? 1.0 : 0.0;
        }
    }
    s.dance = std::move(dance);
    return s;
}

std::vector<long> uniform_targets(std::size_t count, std::size_t length, const std::vector<long>& taken) {
    std::vector<long> out;
    if (count == 0) return out;
    const double step = static_cast<double>(length) / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto c = static_cast<long>(std::floor((static_cast<double>(i) + 0.5) * step));
        // Nudge off a taken center so two windows do not coincide exactly.
        for (int tries = 0; tries < 8 && std::find(taken.begin(), taken.end(), c) != taken.end(); ++tries) c += 1;
        out.push_back(std::clamp(c, 0L, static_cast<long>(length) - 1));
    }
    return out;
}

PrimitiveSet extract_key_motions(const motion::MotionSeq& dance, const SegmentLayout& layout,
                                 const music::MusicFeatureSeq& music) {
    layout.validate();
    const std::size_t N = layout.N;
    if (dance.length() < N || music.length() < N) throw std::invalid_argument("extract_key_motions: sequence shorter than N");
    const std::size_t l = layout.l();

    PrimitiveSet ps;
    ps.layout = SegmentLayout{layout.N, layout.n, 1};
    for (std::size_t j = 0; j <= l; ++j) {
        DancePrimitive p;
        p.kind = PrimitiveKind::hard;
        p.target_frame = static_cast<long>(j * layout.n);
        p.motion = dance.frames.slice_rows(window_start(p.target_frame, N), kPrimitiveFrames);
        ps.hard.push_back(std::move(p));
    }

    const Mat pos = motion::fk_positions(dance.frames.slice_rows(0, N), motion::KinematicChain::smpl22());
    const std::vector<double> speed = motion::mean_joint_speed(pos, dance.fps);
    auto is_min = [&](long i) {
        return i >= 1 && i + 1 < static_cast<long>(speed.size()) && speed[static_cast<std::size_t>(i)] < speed[static_cast<std::size_t>(i - 1)] &&
               speed[static_cast<std::size_t>(i)] <= speed[static_cast<std::size_t>(i + 1)];
    };

    music::MusicFeatureSeq window{music.feats.slice_rows(0, N), music.fps};
    std::vector<std::size_t> ranked = music::rank_beats(window);
    if (ranked.size() > 2 * l) ranked.resize(2 * l);
    std::vector<long> centers;
    for (std::size_t b : ranked) {
        long best = static_cast<long>(b);
        for (long d = 0; d <= 4; ++d) {
            if (is_min(static_cast<long>(b) - d)) {
                best = static_cast<long>(b) - d;
                break;
            }
            if (is_min(static_cast<long>(b) + d)) {
                best = static_cast<long>(b) + d;
                break;
            }
        }
        DancePrimitive p;
        p.kind = PrimitiveKind::soft;
        p.target_frame = best;
        p.strength = window.feats(b, music::kOnset);
        p.motion = dance.frames.slice_rows(window_start(best, N), kPrimitiveFrames);
        centers.push_back(best);
        ps.soft.push_back(std::move(p));
    }
    for (long c : uniform_targets(2 * l - ps.soft.size(), N, centers)) {
        DancePrimitive p;
        p.kind = PrimitiveKind::soft;
        p.target_frame = c;
        p.motion = dance.frames.slice_rows(window_start(c, N), kPrimitiveFrames);
        ps.soft.push_back(std::move(p));
    }
    ps.sort_soft();
    return ps;
}

// ---------------------------------------------------------------------------

void write_motion(const std::filesystem::path& path, const motion::MotionSeq& seq, int genre) {
    require_shape(seq.frames, seq.frames.rows, motion::kMotionDim, "write_motion");
    nlohmann::json h{{"kind", "motion"}, {"fps", seq.fps}};
    if (genre >= 0) h["genre"] = genre;
    io::write_matrix(path, h, seq.frames, io::Dtype::f32);
}

motion::MotionSeq read_motion(const std::filesystem::path& path) {
    const io::Container c = io::read_container(path);
    if (c.header.value("kind", "") != "motion") throw io::HeaderError("not a motion file: " + path.string());
    if (c.header.at("channels").get<std::size_t>() != motion::kMotionDim) throw io::HeaderError("motion file must have 139 channels");
    motion::MotionSeq seq(io::container_matrix(c), c.header.value("fps", motion::kDefaultFps));
    seq.validate();
    return seq;
}

void write_music(const std::filesystem::path& path, const music::MusicFeatureSeq& m, int genre) {
    require_shape(m.feats, m.feats.rows, music::kFeatureDim, "write_music");
    nlohmann::json h{{"kind", "music"}, {"fps", m.fps}};
    if (genre >= 0) h["genre"] = genre;
    io::write_matrix(path, h, m.feats, io::Dtype::f32);
}

music::MusicFeatureSeq read_music(const std::filesystem::path& path) {
    const io::Container c = io::read_container(path);
    if (c.header.value("kind", "") != "music") throw io::HeaderError("not a feature file: " + path.string());
    if (c.header.at("channels").get<std::size_t>() != music::kFeatureDim) throw io::HeaderError("feature file must have 35 channels");
    music::MusicFeatureSeq m{io::container_matrix(c), c.header.value("fps", 30.0)};
    m.validate();
    return m;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<PairedSample>& samples,
                   const std::vector<std::string>& splits) {
    if (splits.size() != samples.size()) throw std::invalid_argument("write_dataset: one split per sample");
    std::filesystem::create_directories(dir);
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        write_motion(dir / (s.id + ".ldm"), s.dance, s.genre);
        write_music(dir / (s.id + ".ldf"), s.music, s.genre);
        entries.push_back({{"id", s.id}, {"genre", s.genre}, {"split", splits[i]}, {"frames", s.dance.length()}});
    }
    std::ofstream f(dir / "manifest.json");
    f << nlohmann::json{{"format", "lodgekit-dataset"}, {"version", 1}, {"samples", entries}}.dump(2) << "\n";
    if (!f) throw io::FormatError("cannot write manifest in " + dir.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.json");
    if (!f) throw io::FormatError("missing manifest.json in " + dir.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw io::HeaderError(std::string("manifest.json: ") + e.what());
    }
    std::vector<ManifestEntry> out;
    for (const auto& e : j.at("samples")) {
        out.push_back({e.at("id").get<std::string>(), e.at("genre").get<int>(), e.value("split", "train")});
    }
    return out;
}

std::vector<PairedSample> load_dataset(const std::filesystem::path& dir, const std::string& split) {
    std::vector<PairedSample> out;
    for (const auto& e : read_manifest(dir)) {
        if (!split.empty() && e.split != split) continue;
        PairedSample s;
        s.id = e.id;
        s.genre = e.genre;
        s.dance = read_motion(dir / (e.id + ".ldm"));
        s.music = read_music(dir / (e.id + ".ldf"));
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace lodge::dataset
