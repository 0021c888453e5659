#include "lodge/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace lodge {

using nlohmann::json;

nn::AdanConfig TrainConfig::adan() const { return {lr, beta1, beta2, beta3, eps, weight_decay}; }
nn::AdamConfig TrainConfig::adam() const { return {lr, beta1, beta3, eps}; }

namespace {

void only_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
    }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

json train_json(const TrainConfig& t) {
    return {{"steps", t.steps},          {"batch", t.batch},       {"optimizer", t.optimizer},
            {"lr", t.lr},                {"beta1", t.beta1},       {"beta2", t.beta2},
            {"beta3", t.beta3},          {"eps", t.eps},           {"weight_decay", t.weight_decay},
            {"ema_decay", t.ema_decay},  {"clip", t.clip},         {"log_every", t.log_every},
            {"checkpoint_every", t.checkpoint_every}};
}

void train_from(const json& j, TrainConfig& t, const std::string& w) {
    only_keys(j, {"steps", "batch", "optimizer", "lr", "beta1", "beta2", "beta3", "eps", "weight_decay", "ema_decay", "clip",
                  "log_every", "checkpoint_every"},
              w);
    read(j, "steps", t.steps, w);
    read(j, "batch", t.batch, w);
    read(j, "optimizer", t.optimizer, w);
    read(j, "lr", t.lr, w);
    read(j, "beta1", t.beta1, w);
    read(j, "beta2", t.beta2, w);
    read(j, "beta3", t.beta3, w);
    read(j, "eps", t.eps, w);
    read(j, "weight_decay", t.weight_decay, w);
    read(j, "ema_decay", t.ema_decay, w);
    read(j, "clip", t.clip, w);
    read(j, "log_every", t.log_every, w);
    read(j, "checkpoint_every", t.checkpoint_every, w);
}

void validate_train(const TrainConfig& t, const std::string& w) {
    if (t.steps < 0) throw ConfigError(w + ".steps must be >= 0");
    if (t.batch < 1) throw ConfigError(w + ".batch must be >= 1");
    if (t.optimizer != "adan" && t.optimizer != "adam") throw ConfigError(w + ".optimizer must be adan or adam");
    if (!(t.lr > 0.0)) throw ConfigError(w + ".lr must be positive");
    for (double b : {t.beta1, t.beta2, t.beta3}) {
        if (!(b >= 0.0 && b < 1.0)) throw ConfigError(w + ": betas must lie in [0, 1)");
    }
    if (!(t.ema_decay >= 0.0 && t.ema_decay <= 1.0)) throw ConfigError(w + ".ema_decay must lie in [0, 1]");
    if (t.clip < 0.0 || t.eps <= 0.0 || t.weight_decay < 0.0) throw ConfigError(w + ": clip, eps, weight_decay out of range");
    if (t.log_every < 1) throw ConfigError(w + ".log_every must be >= 1");
}

}  // namespace

void RunConfig::validate() const {
    try {
        layout.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (layout.N % 8 != 0) throw ConfigError("layout.N must be divisible by 8");
    if (layout.n < 24) throw ConfigError("layout.n must leave room for a soft window (n >= 24)");
    if (T < 1) throw ConfigError("diffusion.T must be >= 1");
    if (sampler.kind != "ddpm" && sampler.kind != "ddim") throw ConfigError("sampler.kind must be ddpm or ddim");
    if (sampler.kind == "ddim" && (sampler.steps < 1 || sampler.steps > T)) throw ConfigError("sampler.steps must be in [1, T]");
    if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("guidance.s must lie in [0, 1]");
    if (model.model_dim == 0 || model.model_dim % 2 || model.time_embed_dim == 0 || model.time_embed_dim % 2) {
        throw ConfigError("model dims must be even and positive");
    }
    if (model.blocks == 0 || model.mlp_ratio == 0 || model.genre_embed == 0 || model.disc_hidden == 0) {
        throw ConfigError("model sizes must be positive");
    }
    validate_train(global_train, "train.global");
    validate_train(local_train, "train.local");
    validate_train(finetune, "train.finetune");
    if (!(finetune_acc_boost >= 0.0)) throw ConfigError("train.finetune_acc_boost must be >= 0");
    try {
        weights.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (genres < 1) throw ConfigError("genres must be >= 1");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (!(bas_sigma > 0.0)) throw ConfigError("metrics.bas_sigma must be positive");
    if (metric_window < 3) throw ConfigError("metrics.window must be >= 3");
    if (beat_period < 8) throw ConfigError("data.beat_period must be >= 8");
    if (data_frames < 2 * beat_period) throw ConfigError("data.frames must be at least two beat periods");
}

json RunConfig::to_json() const {
    return {
        {"layout", {{"N", layout.N}, {"n", layout.n}}},
        {"diffusion", {{"T", T}, {"schedule", diffusion::to_string(schedule)}}},
        {"sampler", {{"kind", sampler.kind}, {"steps", sampler.steps}}},
        {"guidance", {{"s", s}, {"augment", augment}}},
        {"model",
         {{"model_dim", model.model_dim},
          {"blocks", model.blocks},
          {"time_embed_dim", model.time_embed_dim},
          {"mlp_ratio", model.mlp_ratio},
          {"genre_embed", model.genre_embed},
          {"foot_refine", model.foot_refine},
          {"disc_hidden", model.disc_hidden}}},
        {"train",
         {{"global", train_json(global_train)},
          {"local", train_json(local_train)},
          {"finetune", train_json(finetune)},
          {"finetune_acc_boost", finetune_acc_boost}}},
        {"loss",
         {{"joint", weights.joint}, {"vel", weights.vel}, {"acc", weights.acc}, {"contact", weights.contact}, {"genre", weights.genre}}},
        {"genres", genres},
        {"seed", seed},
        {"jobs", jobs},
        {"metrics", {{"bas_sigma", bas_sigma}, {"window", metric_window}}},
        {"data", {{"count", data_count}, {"frames", data_frames}, {"beat_period", beat_period}}},
    };
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    only_keys(j, {"layout", "diffusion", "sampler", "guidance", "model", "train", "loss", "genres", "seed", "jobs", "metrics", "data"},
              "config");
    if (j.contains("layout")) {
        const auto& l = j["layout"];
        only_keys(l, {"N", "n"}, "layout");
        read(l, "N", c.layout.N, "layout");
        read(l, "n", c.layout.n, "layout");
    }
    if (j.contains("diffusion")) {
        const auto& d = j["diffusion"];
        only_keys(d, {"T", "schedule"}, "diffusion");
        read(d, "T", c.T, "diffusion");
        if (d.contains("schedule")) {
            try {
                c.schedule = diffusion::parse_schedule_kind(d["schedule"].get<std::string>());
            } catch (const std::exception& e) {
                throw ConfigError(std::string("diffusion.schedule: ") + e.what());
            }
        }
    }
    if (j.contains("sampler")) {
        const auto& s = j["sampler"];
        only_keys(s, {"kind", "steps"}, "sampler");
        read(s, "kind", c.sampler.kind, "sampler");
        read(s, "steps", c.sampler.steps, "sampler");
    }
    if (j.contains("guidance")) {
        const auto& g = j["guidance"];
        only_keys(g, {"s", "augment"}, "guidance");
        read(g, "s", c.s, "guidance");
        read(g, "augment", c.augment, "guidance");
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        only_keys(m, {"model_dim", "blocks", "time_embed_dim", "mlp_ratio", "genre_embed", "foot_refine", "disc_hidden"}, "model");
        read(m, "model_dim", c.model.model_dim, "model");
        read(m, "blocks", c.model.blocks, "model");
        read(m, "time_embed_dim", c.model.time_embed_dim, "model");
        read(m, "mlp_ratio", c.model.mlp_ratio, "model");
        read(m, "genre_embed", c.model.genre_embed, "model");
        read(m, "foot_refine", c.model.foot_refine, "model");
        read(m, "disc_hidden", c.model.disc_hidden, "model");
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        only_keys(t, {"global", "local", "finetune", "finetune_acc_boost"}, "train");
        if (t.contains("global")) train_from(t["global"], c.global_train, "train.global");
        if (t.contains("local")) train_from(t["local"], c.local_train, "train.local");
        if (t.contains("finetune")) train_from(t["finetune"], c.finetune, "train.finetune");
        read(t, "finetune_acc_boost", c.finetune_acc_boost, "train");
    }
    if (j.contains("loss")) {
        const auto& w = j["loss"];
        only_keys(w, {"joint", "vel", "acc", "contact", "genre"}, "loss");
        read(w, "joint", c.weights.joint, "loss");
        read(w, "vel", c.weights.vel, "loss");
        read(w, "acc", c.weights.acc, "loss");
        read(w, "contact", c.weights.contact, "loss");
        read(w, "genre", c.weights.genre, "loss");
    }
    read(j, "genres", c.genres, "config");
    read(j, "seed", c.seed, "config");
    read(j, "jobs", c.jobs, "config");
    if (j.contains("metrics")) {
        only_keys(j["metrics"], {"bas_sigma", "window"}, "metrics");
        read(j["metrics"], "bas_sigma", c.bas_sigma, "metrics");
        read(j["metrics"], "window", c.metric_window, "metrics");
    }
    if (j.contains("data")) {
        const auto& d = j["data"];
        only_keys(d, {"count", "frames", "beat_period"}, "data");
        read(d, "count", c.data_count, "data");
        read(d, "frames", c.data_frames, "data");
        read(d, "beat_period", c.beat_period, "data");
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

void write_config_file(const std::filesystem::path& path, const RunConfig& cfg, const json& extra) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    json j = cfg.to_json();
    if (!extra.is_null() && !extra.empty()) j["run"] = extra;
    std::ofstream f(path);
    f << j.dump(2) << "\n";
    if (!f) throw std::runtime_error("cannot write config echo " + path.string());
}

void write_config_echo(const std::filesystem::path& dir, const RunConfig& cfg, const json& extra) {
    std::filesystem::create_directories(dir);
    write_config_file(dir / "config.json", cfg, extra);
}

}  // namespace lodge
