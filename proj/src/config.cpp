#include "motiondiff/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <nlohmann/json.hpp>

#include "motiondiff/error.hpp"

namespace motiondiff {

namespace {

using Json = nlohmann::ordered_json;

void check_keys(const Json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
        raise(ErrorKind::Config, "config section '" + section + "' must be an object");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            raise(ErrorKind::Config, "unknown config key '" + section + "." + it.key() + "'");
        }
    }
}

template <typename T>
void read_field(const Json& j, const std::string& section, const char* key, T& out) {
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception& e) {
        raise(ErrorKind::Config,
              "config key '" + section + "." + key + "' has the wrong type: " + e.what());
    }
}

Json emit_train(const TrainConfig& t) {
    return Json{{"batch", t.batch}, {"iterations", t.iterations}, {"lr", t.lr}, {"seed", t.seed}};
}

void parse_train(const Json& j, const std::string& section, TrainConfig& t) {
    check_keys(j, section, {"batch", "iterations", "lr", "seed"});
    read_field(j, section, "batch", t.batch);
    read_field(j, section, "iterations", t.iterations);
    read_field(j, section, "lr", t.lr);
    read_field(j, section, "seed", t.seed);
}

}  // namespace

void TrainConfig::validate() const {
    require(batch >= 1, ErrorKind::Config, "train.batch must be at least 1");
    require(iterations >= 0, ErrorKind::Config, "train.iterations must be non-negative");
    require(std::isfinite(lr) && lr > 0.0, ErrorKind::Config, "train.lr must be positive");
}

void PathsConfig::validate() const {
    require(!dataset.empty() && !checkpoint.empty() && !capp_checkpoint.empty() &&
                !report.empty(),
            ErrorKind::Config, "paths entries must be non-empty");
}

void RunConfig::link_dims() {
    denoiser.motion_dim = world.motion_dim();
    denoiser.audio_feat_dim = world.audio_feat_dim;
    denoiser.emotion_dim = world.emotion_dim;
    denoiser.total_steps = schedule.total_steps;
    capp.audio_feat_dim = world.audio_feat_dim;
    capp.pose_dim = world.pose_dim;
}

void RunConfig::validate() const {
    world.validate();
    denoiser.validate();
    schedule.validate();
    capp.validate();
    train.validate();
    capp_train.validate();
    paths.validate();
    require(denoiser.motion_dim == world.motion_dim() &&
                denoiser.audio_feat_dim == world.audio_feat_dim &&
                denoiser.emotion_dim == world.emotion_dim &&
                denoiser.total_steps == schedule.total_steps &&
                capp.audio_feat_dim == world.audio_feat_dim && capp.pose_dim == world.pose_dim,
            ErrorKind::Config, "shared dimensions are out of sync; call link_dims after edits");
    require(steps >= 1 && steps <= schedule.total_steps, ErrorKind::Config,
            "steps must lie in [1, schedule.total_steps]");
    for (double v : {cfg_defaults.lambda_audio, cfg_defaults.lambda_gaze,
                     cfg_defaults.lambda_distance, cfg_defaults.lambda_emotion,
                     cfg_defaults.lambda_prefix}) {
        require(std::isfinite(v) && v >= 0.0, ErrorKind::Config,
                "guidance scales must be finite and non-negative");
    }
}

std::string emit_config(const RunConfig& cfg) {
    Json j;
    j["world"] = Json{{"seed", cfg.world.seed},
                      {"frame_rate", cfg.world.frame_rate},
                      {"audio_feat_dim", cfg.world.audio_feat_dim},
                      {"pose_dim", cfg.world.pose_dim},
                      {"dyn_dim", cfg.world.dyn_dim},
                      {"lip_channels", cfg.world.lip_channels},
                      {"emotion_dim", cfg.world.emotion_dim},
                      {"lag", cfg.world.lag},
                      {"noise_level", cfg.world.noise_level}};
    j["denoiser"] = Json{{"window_len", cfg.denoiser.window_len},
                         {"prefix_len", cfg.denoiser.prefix_len},
                         {"embed_dim", cfg.denoiser.embed_dim},
                         {"heads", cfg.denoiser.heads},
                         {"layers", cfg.denoiser.layers}};
    j["schedule"] = Json{{"total_steps", cfg.schedule.total_steps},
                         {"beta_start", cfg.schedule.beta_start},
                         {"beta_end", cfg.schedule.beta_end}};
    j["capp"] = Json{{"window_len", cfg.capp.window_len},
                     {"embed_dim", cfg.capp.embed_dim},
                     {"heads", cfg.capp.heads},
                     {"layers", cfg.capp.layers}};
    j["train"] = emit_train(cfg.train);
    j["capp_train"] = emit_train(cfg.capp_train);
    j["cfg_defaults"] = Json{{"lambda_audio", cfg.cfg_defaults.lambda_audio},
                             {"lambda_gaze", cfg.cfg_defaults.lambda_gaze},
                             {"lambda_distance", cfg.cfg_defaults.lambda_distance},
                             {"lambda_emotion", cfg.cfg_defaults.lambda_emotion},
                             {"lambda_prefix", cfg.cfg_defaults.lambda_prefix}};
    j["steps"] = cfg.steps;
    j["paths"] = Json{{"dataset", cfg.paths.dataset},
                      {"checkpoint", cfg.paths.checkpoint},
                      {"capp_checkpoint", cfg.paths.capp_checkpoint},
                      {"report", cfg.paths.report}};
    return j.dump(2) + "\n";
}

RunConfig parse_config(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        raise(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "<top>",
               {"world", "denoiser", "schedule", "capp", "train", "capp_train", "cfg_defaults",
                "steps", "paths"});

    RunConfig cfg;
    if (j.contains("world")) {
        const Json& w = j.at("world");
        check_keys(w, "world",
                   {"seed", "frame_rate", "audio_feat_dim", "pose_dim", "dyn_dim", "lip_channels",
                    "emotion_dim", "lag", "noise_level"});
        read_field(w, "world", "seed", cfg.world.seed);
        read_field(w, "world", "frame_rate", cfg.world.frame_rate);
        read_field(w, "world", "audio_feat_dim", cfg.world.audio_feat_dim);
        read_field(w, "world", "pose_dim", cfg.world.pose_dim);
        read_field(w, "world", "dyn_dim", cfg.world.dyn_dim);
        read_field(w, "world", "lip_channels", cfg.world.lip_channels);
        read_field(w, "world", "emotion_dim", cfg.world.emotion_dim);
        read_field(w, "world", "lag", cfg.world.lag);
        read_field(w, "world", "noise_level", cfg.world.noise_level);
    }
    if (j.contains("denoiser")) {
        const Json& d = j.at("denoiser");
        check_keys(d, "denoiser", {"window_len", "prefix_len", "embed_dim", "heads", "layers"});
        read_field(d, "denoiser", "window_len", cfg.denoiser.window_len);
        read_field(d, "denoiser", "prefix_len", cfg.denoiser.prefix_len);
        read_field(d, "denoiser", "embed_dim", cfg.denoiser.embed_dim);
        read_field(d, "denoiser", "heads", cfg.denoiser.heads);
        read_field(d, "denoiser", "layers", cfg.denoiser.layers);
    }
    if (j.contains("schedule")) {
        const Json& s = j.at("schedule");
        check_keys(s, "schedule", {"total_steps", "beta_start", "beta_end"});
        read_field(s, "schedule", "total_steps", cfg.schedule.total_steps);
        read_field(s, "schedule", "beta_start", cfg.schedule.beta_start);
        read_field(s, "schedule", "beta_end", cfg.schedule.beta_end);
    }
    if (j.contains("capp")) {
        const Json& c = j.at("capp");
        check_keys(c, "capp", {"window_len", "embed_dim", "heads", "layers"});
        read_field(c, "capp", "window_len", cfg.capp.window_len);
        read_field(c, "capp", "embed_dim", cfg.capp.embed_dim);
        read_field(c, "capp", "heads", cfg.capp.heads);
        read_field(c, "capp", "layers", cfg.capp.layers);
    }
    if (j.contains("train")) {
        parse_train(j.at("train"), "train", cfg.train);
    }
    if (j.contains("capp_train")) {
        parse_train(j.at("capp_train"), "capp_train", cfg.capp_train);
    }
    if (j.contains("cfg_defaults")) {
        const Json& g = j.at("cfg_defaults");
        check_keys(g, "cfg_defaults",
                   {"lambda_audio", "lambda_gaze", "lambda_distance", "lambda_emotion",
                    "lambda_prefix"});
        read_field(g, "cfg_defaults", "lambda_audio", cfg.cfg_defaults.lambda_audio);
        read_field(g, "cfg_defaults", "lambda_gaze", cfg.cfg_defaults.lambda_gaze);
        read_field(g, "cfg_defaults", "lambda_distance", cfg.cfg_defaults.lambda_distance);
        read_field(g, "cfg_defaults", "lambda_emotion", cfg.cfg_defaults.lambda_emotion);
        read_field(g, "cfg_defaults", "lambda_prefix", cfg.cfg_defaults.lambda_prefix);
    }
    read_field(j, "<top>", "steps", cfg.steps);
    if (j.contains("paths")) {
        const Json& p = j.at("paths");
        check_keys(p, "paths", {"dataset", "checkpoint", "capp_checkpoint", "report"});
        read_field(p, "paths", "dataset", cfg.paths.dataset);
        read_field(p, "paths", "checkpoint", cfg.paths.checkpoint);
        read_field(p, "paths", "capp_checkpoint", cfg.paths.capp_checkpoint);
        read_field(p, "paths", "report", cfg.paths.report);
    }
    cfg.link_dims();
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(ErrorKind::Io, "cannot open config file '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void save_config_file(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(ErrorKind::Io, "cannot write config file '" + path + "'");
    }
    out << emit_config(cfg);
    require(bool(out), ErrorKind::Io, "failed writing config file '" + path + "'");
}

std::string data_root() {
    const char* env = std::getenv("MOTIONDIFF_DATA_ROOT");
    if (env == nullptr || env[0] == '\0') {
        return ".";
    }
    return env;
}

std::string resolve_path(const std::string& path) {
    require(!path.empty(), ErrorKind::Config, "path must be non-empty");
    std::filesystem::path p(path);
    if (p.is_absolute()) {
        return path;
    }
    return (std::filesystem::path(data_root()) / p).string();
}

std::string config_hash(const RunConfig& cfg) {
    const std::string text = emit_config(cfg);
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace motiondiff
