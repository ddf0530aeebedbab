#include "motiondiff/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "motiondiff/checkpoint.hpp"
#include "motiondiff/diffusion.hpp"
#include "motiondiff/error.hpp"

namespace motiondiff {

namespace {

using Json = nlohmann::ordered_json;

const double kLogTempFloor = std::log(0.5);

std::string meta_path(const std::string& ckpt_path) { return ckpt_path + ".json"; }

std::vector<WorldSample> load_all(const std::string& dir, const DatasetManifest& m) {
    std::vector<WorldSample> samples;
    samples.reserve(static_cast<size_t>(m.count));
    for (int64_t i = 0; i < m.count; ++i) {
        samples.push_back(load_sample(dir, i));
    }
    return samples;
}

Tensor copy_rows(const Tensor& src, int64_t begin, int64_t count) {
    Tensor out({count, src.cols()});
    for (int64_t r = 0; r < count; ++r) {
        for (int64_t c = 0; c < src.cols(); ++c) {
            out.at(r, c) = src.at(begin + r, c);
        }
    }
    return out;
}

void log_point(std::vector<std::pair<int64_t, double>>& log, int64_t it, int64_t total,
               double loss) {
    if (it % 100 == 0 || it == total) {
        log.emplace_back(it, loss);
    }
}

double scalar_loss(const Var& loss) { return loss.value().raw()[0]; }

}  // namespace

void save_model(const ParameterList& params, const ModelMeta& meta, const std::string& path) {
    Checkpoint::from_params(params).save(path);
    Json j;
    j["kind"] = meta.kind;
    j["mean_distance"] = meta.mean_distance;
    j["trained_iterations"] = meta.trained_iterations;
    j["config"] = Json::parse(emit_config(meta.config));
    std::ofstream out(meta_path(path), std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(ErrorKind::Io, "cannot write checkpoint metadata '" + meta_path(path) + "'");
    }
    out << j.dump(2) << "\n";
    require(bool(out), ErrorKind::Io, "failed writing '" + meta_path(path) + "'");
}

ModelMeta load_model_meta(const std::string& path) {
    std::ifstream in(meta_path(path), std::ios::binary);
    if (!in) {
        raise(ErrorKind::Io, "missing checkpoint metadata '" + meta_path(path) + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    ModelMeta meta;
    try {
        Json j = Json::parse(buf.str());
        meta.kind = j.at("kind").get<std::string>();
        meta.mean_distance = j.at("mean_distance").get<double>();
        meta.trained_iterations = j.at("trained_iterations").get<int64_t>();
        meta.config = parse_config(j.at("config").dump());
    } catch (const Json::exception& e) {
        raise(ErrorKind::Io, "checkpoint metadata '" + meta_path(path) + "' is corrupt: " +
                                 e.what());
    }
    return meta;
}

void load_model_weights(const ParameterList& params, const std::string& path) {
    Checkpoint::load(path).load_into(params);
}

LoadedDenoiser load_denoiser(const std::string& ckpt_path) {
    LoadedDenoiser d;
    d.meta = load_model_meta(ckpt_path);
    require(d.meta.kind == "denoiser", ErrorKind::Config,
            "'" + ckpt_path + "' is not a denoiser checkpoint");
    d.meta.config.validate();
    Rng init_rng(0);
    d.model = std::make_unique<Denoiser>(d.meta.config.denoiser, init_rng);
    ParameterList params;
    d.model->params(params);
    load_model_weights(params, ckpt_path);
    d.sched = std::make_unique<NoiseSchedule>(d.meta.config.schedule);
    return d;
}

LoadedCapp load_capp(const std::string& ckpt_path) {
    LoadedCapp c;
    c.meta = load_model_meta(ckpt_path);
    require(c.meta.kind == "capp", ErrorKind::Config,
            "'" + ckpt_path + "' is not a CAPP checkpoint");
    c.meta.config.validate();
    Rng init_rng(0);
    c.model = std::make_unique<CappModel>(c.meta.config.capp, init_rng);
    ParameterList params;
    c.model->params(params);
    load_model_weights(params, ckpt_path);
    return c;
}

std::string motion_csv(const Tensor& motion, int64_t pose_dim) {
    std::string out = "frame";
    char cell[48];
    for (int64_t c = 0; c < motion.cols(); ++c) {
        const char* base = c < pose_dim ? "pose" : "dyn";
        std::snprintf(cell, sizeof(cell), ",%s%lld", base,
                      static_cast<long long>(c < pose_dim ? c : c - pose_dim));
        out += cell;
    }
    out += '\n';
    for (int64_t r = 0; r < motion.rows(); ++r) {
        std::snprintf(cell, sizeof(cell), "%lld", static_cast<long long>(r));
        out += cell;
        for (int64_t c = 0; c < motion.cols(); ++c) {
            std::snprintf(cell, sizeof(cell), ",%.17g", motion.at(r, c));
            out += cell;
        }
        out += '\n';
    }
    return out;
}

void write_loss_csv(const std::vector<std::pair<int64_t, double>>& log,
                    const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(ErrorKind::Io, "cannot write loss log '" + path + "'");
    }
    out << "iteration,loss\n";
    char line[64];
    for (const auto& [it, loss] : log) {
        std::snprintf(line, sizeof(line), "%lld,%.17g\n", static_cast<long long>(it), loss);
        out << line;
    }
    require(bool(out), ErrorKind::Io, "failed writing loss log '" + path + "'");
}

TrainResult train_denoiser(const RunConfig& cfg, const std::string& dataset_dir,
                           const std::string& ckpt_path, const std::string& resume_path) {
    cfg.validate();
    const DatasetManifest manifest = read_manifest(dataset_dir);
    require(manifest.config.world == cfg.world, ErrorKind::Config,
            "dataset was generated under a different world config");
    const int64_t W = cfg.denoiser.window_len;
    const int64_t K = cfg.denoiser.prefix_len;
    const int64_t M = cfg.denoiser.motion_dim;
    require(manifest.length >= W, ErrorKind::Config,
            "dataset samples are shorter than one denoiser window");
    const std::vector<WorldSample> samples = load_all(dataset_dir, manifest);

    Rng rng(cfg.train.seed);
    Denoiser model(cfg.denoiser, rng);
    ParameterList params;
    model.params(params);
    if (!resume_path.empty()) {
        const ModelMeta prev = load_model_meta(resume_path);
        require(prev.kind == "denoiser", ErrorKind::Config,
                "resume checkpoint '" + resume_path + "' is not a denoiser");
        require(prev.config.denoiser == cfg.denoiser, ErrorKind::Config,
                "resume checkpoint architecture differs from the current config");
        load_model_weights(params, resume_path);
    }

    NoiseSchedule sched(cfg.schedule);
    Adam opt(AdamConfig{cfg.train.lr, 0.9, 0.999, 1e-8});
    const int64_t B = cfg.train.batch;

    TrainResult result;
    result.mean_distance = manifest.mean_distance;
    for (int64_t it = 1; it <= cfg.train.iterations; ++it) {
        Tensor x0({B * W, M});
        std::vector<ConditionBundle> conds;
        conds.reserve(static_cast<size_t>(B));
        for (int64_t b = 0; b < B; ++b) {
            const int64_t si = rng.uniform_int(0, manifest.count - 1);
            const WorldSample& s = samples[static_cast<size_t>(si)];
            const int64_t start = rng.uniform_int(0, manifest.length - W);
            for (int64_t r = 0; r < W; ++r) {
                for (int64_t c = 0; c < M; ++c) {
                    x0.at(b * W + r, c) = s.motion.at(start + r, c);
                }
            }
            ConditionBundle cond;
            cond.has_audio = true;
            cond.audio = copy_rows(s.audio, start, W);
            cond.audio_valid = W;
            cond.has_gaze = true;
            cond.g_theta = s.g_theta;
            cond.g_phi = s.g_phi;
            cond.has_distance = true;
            cond.distance = s.d;
            cond.has_emotion = true;
            cond.emotion = s.e;
            if (K > 0 && start >= K) {
                cond.has_prefix = true;
                cond.motion_pre = copy_rows(s.motion, start - K, K);
                cond.audio_pre = copy_rows(s.audio, start - K, K);
            }
            conds.push_back(dropout_conditions(cond, W, rng));
        }

        double lv = 0.0;
        try {
            Var loss = training_loss(model, sched, x0, conds, rng);
            lv = scalar_loss(loss);
            require(std::isfinite(lv), ErrorKind::Numeric, "loss is non-finite");
            zero_grad(params);
            backward(loss);
            opt.step(params);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Numeric) {
                raise(ErrorKind::Training, "training diverged at iteration " +
                                               std::to_string(it) + ": " + e.what());
            }
            throw;
        }
        log_point(result.loss_log, it, cfg.train.iterations, lv);
    }

    ModelMeta meta;
    meta.kind = "denoiser";
    meta.config = cfg;
    meta.mean_distance = manifest.mean_distance;
    meta.trained_iterations = cfg.train.iterations;
    save_model(params, meta, ckpt_path);
    return result;
}

TrainResult train_capp(const RunConfig& cfg, const std::string& dataset_dir,
                       const std::string& ckpt_path) {
    cfg.validate();
    const DatasetManifest manifest = read_manifest(dataset_dir);
    require(manifest.config.world == cfg.world, ErrorKind::Config,
            "dataset was generated under a different world config");
    const int64_t w = cfg.capp.window_len;
    const int64_t B = cfg.capp_train.batch;
    const int64_t starts_avail = manifest.length - w + 1;
    require(starts_avail >= B, ErrorKind::Config,
            "dataset samples too short for " + std::to_string(B) + " distinct windows");
    const std::vector<WorldSample> samples = load_all(dataset_dir, manifest);
    const int64_t pose_dim = cfg.world.pose_dim;
    const int64_t A = cfg.world.audio_feat_dim;

    Rng rng(cfg.capp_train.seed);
    CappModel model(cfg.capp, rng);
    ParameterList params;
    model.params(params);
    Adam opt(AdamConfig{cfg.capp_train.lr, 0.9, 0.999, 1e-8});

    TrainResult result;
    result.mean_distance = manifest.mean_distance;
    for (int64_t it = 1; it <= cfg.capp_train.iterations; ++it) {
        const int64_t si = rng.uniform_int(0, manifest.count - 1);
        const WorldSample& s = samples[static_cast<size_t>(si)];
        // Distinct starts, drawn as anchor plus nearby companion: every
        // anchor tries to bring a 1-4 frame shift of itself into the batch,
        // so the loss constantly sees almost-aligned windows as negatives
        // and the embedding has to resolve small time offsets.
        std::vector<int64_t> starts;
        std::vector<bool> used(static_cast<size_t>(starts_avail), false);
        const auto push_unique = [&](int64_t v) {
            if (used[static_cast<size_t>(v)]) return;
            used[static_cast<size_t>(v)] = true;
            starts.push_back(v);
        };
        while (static_cast<int64_t>(starts.size()) < B) {
            const int64_t a = rng.uniform_int(0, starts_avail - 1);
            push_unique(a);
            if (static_cast<int64_t>(starts.size()) < B) {
                const int64_t d = rng.uniform_int(1, 4);
                const int64_t c = a + d < starts_avail ? a + d : a - d;
                if (c >= 0) push_unique(c);
            }
        }

        Tensor audio_w({B * w, A});
        Tensor pose_w({B * w, pose_dim});
        for (int64_t b = 0; b < B; ++b) {
            const int64_t start = starts[static_cast<size_t>(b)];
            for (int64_t r = 0; r < w; ++r) {
                for (int64_t c = 0; c < A; ++c) {
                    audio_w.at(b * w + r, c) = s.audio.at(start + r, c);
                }
                for (int64_t c = 0; c < pose_dim; ++c) {
                    pose_w.at(b * w + r, c) = s.motion.at(start + r, c);
                }
            }
        }

        double lv = 0.0;
        try {
            Var loss = contrastive_loss(model, audio_w, pose_w, B);
            lv = scalar_loss(loss);
            require(std::isfinite(lv), ErrorKind::Numeric, "loss is non-finite");
            zero_grad(params);
            backward(loss);
            opt.step(params);
            // Floor the temperature at 0.5. Left free it collapses toward
            // zero, where tiny relative margins already zero the loss and
            // off-pair cosines stay high in absolute terms; the floor keeps
            // pressure on until mismatched windows are actually far apart.
            Tensor& lt = model.log_temp_var().mutable_value();
            lt.raw()[0] = std::max(lt.raw()[0], kLogTempFloor);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Numeric) {
                raise(ErrorKind::Training, "training diverged at iteration " +
                                               std::to_string(it) + ": " + e.what());
            }
            throw;
        }
        log_point(result.loss_log, it, cfg.capp_train.iterations, lv);
    }

    ModelMeta meta;
    meta.kind = "capp";
    meta.config = cfg;
    meta.mean_distance = manifest.mean_distance;
    meta.trained_iterations = cfg.capp_train.iterations;
    save_model(params, meta, ckpt_path);
    return result;
}

}  // namespace motiondiff
