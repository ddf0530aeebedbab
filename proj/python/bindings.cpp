// Python face of the engine: the five pipeline operations (dataset
// generation, the two trainings, generation, evaluation) plus the oracle
// metrics, all speaking numpy. Library errors surface as MotionDiffError
// with the category prefixed to the message.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "motiondiff/capp.hpp"
#include "motiondiff/config.hpp"
#include "motiondiff/dataset.hpp"
#include "motiondiff/error.hpp"
#include "motiondiff/harness.hpp"
#include "motiondiff/metrics.hpp"
#include "motiondiff/windowing.hpp"
#include "motiondiff/world.hpp"

namespace py = pybind11;
using namespace motiondiff;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DoubleArray& a, const char* name) {
    require(a.ndim() == 1 || a.ndim() == 2, ErrorKind::Dimension,
            std::string(name) + " must be a 1-D or 2-D array");
    const int64_t rows = a.ndim() == 2 ? a.shape(0) : 1;
    const int64_t cols = a.ndim() == 2 ? a.shape(1) : a.shape(0);
    Tensor t({rows, cols});
    const double* src = a.data();
    for (int64_t i = 0; i < t.size(); ++i) t[i] = src[i];
    return t;
}

py::array_t<double> from_tensor(const Tensor& t) {
    py::array_t<double> a({t.rows(), t.cols()});
    double* dst = a.mutable_data();
    for (int64_t i = 0; i < t.size(); ++i) dst[i] = t.raw()[i];
    return a;
}

RunConfig config_from_json(const std::string& text) {
    RunConfig cfg = parse_config(text);
    cfg.validate();
    return cfg;
}

py::dict report_dict(const MetricReport& r) {
    py::dict d;
    d["delta_p"] = r.delta_p;
    d["capp"] = r.capp;
    d["oracle_alignment"] = r.oracle_alignment;
    d["gaze_error"] = r.gaze_error;
    d["distance_error"] = r.distance_error;
    d["boundary_ratio"] = r.boundary_ratio;
    return d;
}

py::dict py_generate_dataset(const std::string& config, int64_t count, int64_t length,
                             uint64_t seed, const std::string& out_dir) {
    const RunConfig cfg = config_from_json(config);
    write_dataset(cfg, count, length, seed, out_dir);
    const DatasetManifest m = read_manifest(out_dir);
    py::dict d;
    d["count"] = m.count;
    d["length"] = m.length;
    d["total_frames"] = m.total_frames;
    d["seed"] = m.seed;
    d["mean_distance"] = m.mean_distance;
    d["config_hash"] = m.hash;
    return d;
}

std::vector<std::pair<int64_t, double>> py_train_denoiser(const std::string& config,
                                                          const std::string& data_dir,
                                                          const std::string& out,
                                                          const std::string& resume) {
    const RunConfig cfg = config_from_json(config);
    return train_denoiser(cfg, data_dir, out, resume).loss_log;
}

std::vector<std::pair<int64_t, double>> py_train_capp(const std::string& config,
                                                      const std::string& data_dir,
                                                      const std::string& out) {
    const RunConfig cfg = config_from_json(config);
    return train_capp(cfg, data_dir, out).loss_log;
}

py::array_t<double> py_generate(const std::string& ckpt, py::object audio, int64_t length,
                                uint64_t world_seed,
                                std::optional<std::pair<double, double>> gaze,
                                std::optional<double> distance, py::object emotion,
                                std::optional<double> lambda_a, std::optional<double> lambda_g,
                                std::optional<int64_t> steps, uint64_t seed) {
    LoadedDenoiser den = load_denoiser(ckpt);
    const RunConfig& cfg = den.meta.config;

    Tensor audio_t;
    if (!audio.is_none()) {
        audio_t = to_tensor(audio.cast<DoubleArray>(), "audio");
    } else {
        const int64_t n = length > 0 ? length : 4 * cfg.denoiser.window_len;
        Rng wrng(world_seed);
        audio_t = generate_sample(cfg.world, n, 0.0, 0.0, den.meta.mean_distance, Tensor{}, wrng)
                      .audio;
    }

    Tensor emotion_t;
    if (!emotion.is_none()) {
        emotion_t = to_tensor(emotion.cast<DoubleArray>(), "emotion");
        require(emotion_t.size() == cfg.world.emotion_dim, ErrorKind::Dimension,
                "emotion needs " + std::to_string(cfg.world.emotion_dim) + " values, got " +
                    std::to_string(emotion_t.size()));
    }
    const ConditionBundle base = resolve_defaults(gaze, distance, emotion_t,
                                                  den.meta.mean_distance, cfg.world.emotion_dim);

    SamplerConfig sampler;
    sampler.steps = steps.value_or(cfg.steps);
    sampler.scales = cfg.cfg_defaults;
    if (lambda_a) sampler.scales.lambda_audio = *lambda_a;
    if (lambda_g) sampler.scales.lambda_gaze = *lambda_g;

    Rng rng(seed);
    return from_tensor(generate_long(*den.model, *den.sched, audio_t, base, sampler, rng));
}

py::dict py_evaluate(const std::string& ckpt, const std::string& capp_ckpt,
                     const std::string& data_dir, uint64_t seed, std::optional<int64_t> steps,
                     std::optional<double> lambda_a, std::optional<double> lambda_g) {
    LoadedDenoiser den = load_denoiser(ckpt);
    LoadedCapp capp = load_capp(capp_ckpt);
    const RunConfig& cfg = den.meta.config;
    require(capp.meta.config.world == cfg.world, ErrorKind::Config,
            "denoiser and CAPP checkpoints were trained under different worlds");

    const DatasetManifest manifest = read_manifest(data_dir);
    require(manifest.config.world == cfg.world, ErrorKind::Config,
            "eval dataset was generated under a different world config");
    require(manifest.count >= 1, ErrorKind::Contract, "eval set is empty");
    std::vector<WorldSample> eval_set;
    for (int64_t i = 0; i < manifest.count; ++i) eval_set.push_back(load_sample(data_dir, i));

    SamplerConfig sampler;
    sampler.steps = steps.value_or(cfg.steps);
    sampler.scales = cfg.cfg_defaults;
    if (lambda_a) sampler.scales.lambda_audio = *lambda_a;
    if (lambda_g) sampler.scales.lambda_gaze = *lambda_g;

    // Three independently seeded passes, fields averaged.
    MetricReport mean;
    for (uint64_t i = 0; i < 3; ++i) {
        Rng rng(seed + i);
        const MetricReport r = evaluate_model(*den.model, *den.sched, capp.model.get(),
                                              cfg.world, eval_set, sampler, rng);
        mean.delta_p += r.delta_p / 3.0;
        mean.capp += r.capp / 3.0;
        mean.oracle_alignment += r.oracle_alignment / 3.0;
        mean.gaze_error += r.gaze_error / 3.0;
        mean.distance_error += r.distance_error / 3.0;
        mean.boundary_ratio += r.boundary_ratio / 3.0;
    }
    return report_dict(mean);
}

py::dict py_world_sample(const std::string& config, int64_t length, uint64_t seed,
                         double g_theta, double g_phi, double d, py::object emotion) {
    const RunConfig cfg = config_from_json(config);
    Tensor emotion_t;
    if (!emotion.is_none()) emotion_t = to_tensor(emotion.cast<DoubleArray>(), "emotion");
    Rng rng(seed);
    const WorldSample s = generate_sample(cfg.world, length, g_theta, g_phi, d, emotion_t, rng);
    py::dict out;
    out["audio"] = from_tensor(s.audio);
    out["motion"] = from_tensor(s.motion);
    return out;
}

double py_oracle_alignment(const DoubleArray& motion, const DoubleArray& audio,
                           const std::string& config) {
    const RunConfig cfg = config_from_json(config);
    return oracle_alignment(to_tensor(motion, "motion"), to_tensor(audio, "audio"), cfg.world);
}

double py_boundary_ratio(const std::vector<DoubleArray>& sequences, int64_t window_len) {
    std::vector<Tensor> seqs;
    seqs.reserve(sequences.size());
    for (const DoubleArray& a : sequences) seqs.push_back(to_tensor(a, "sequence"));
    return boundary_ratio(seqs, window_len);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Audio-conditioned motion diffusion engine";

    static py::exception<Error> exc(m, "MotionDiffError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            exc((std::string(kind_name(e.kind())) + ": " + e.what()).c_str());
        }
    });

    m.def("default_config", [] { return emit_config(RunConfig{}); },
          "Canonical JSON text of the all-defaults configuration.");
    m.def("config_hash", [](const std::string& text) { return config_hash(config_from_json(text)); },
          py::arg("config"), "Stable 16-hex-digit hash of a configuration.");
    m.def("generate_dataset", &py_generate_dataset, py::arg("config"), py::arg("count"),
          py::arg("length"), py::arg("seed"), py::arg("out_dir"),
          "Write a synthetic dataset and return its manifest summary.");
    m.def("train_denoiser", &py_train_denoiser, py::arg("config"), py::arg("data_dir"),
          py::arg("out"), py::arg("resume") = "",
          "Train the denoiser; returns the (iteration, loss) log.");
    m.def("train_capp", &py_train_capp, py::arg("config"), py::arg("data_dir"), py::arg("out"),
          "Train the contrastive audio/pose scorer; returns the (iteration, loss) log.");
    m.def("generate", &py_generate, py::arg("ckpt"), py::arg("audio") = py::none(),
          py::arg("length") = 0, py::arg("world_seed") = 1, py::arg("gaze") = py::none(),
          py::arg("distance") = py::none(), py::arg("emotion") = py::none(),
          py::arg("lambda_a") = py::none(), py::arg("lambda_g") = py::none(),
          py::arg("steps") = py::none(), py::arg("seed") = 1,
          "Generate motion for the given audio (or a fresh synthetic track); returns "
          "[frames x motion_dim].");
    m.def("evaluate", &py_evaluate, py::arg("ckpt"), py::arg("capp_ckpt"), py::arg("data_dir"),
          py::arg("seed") = 1, py::arg("steps") = py::none(), py::arg("lambda_a") = py::none(),
          py::arg("lambda_g") = py::none(),
          "Evaluate a checkpoint pair on a dataset; metrics averaged over three seeds.");
    m.def("world_sample", &py_world_sample, py::arg("config"), py::arg("length"),
          py::arg("seed") = 1, py::arg("g_theta") = 0.0, py::arg("g_phi") = 0.0,
          py::arg("d") = 1.5, py::arg("emotion") = py::none(),
          "Draw one synthetic (audio, motion) pair.");
    m.def("pose_variation_intensity",
          [](const DoubleArray& motion) {
              return pose_variation_intensity(to_tensor(motion, "motion"));
          },
          py::arg("motion"), "Mean adjacent-frame rotation change.");
    m.def("oracle_alignment", &py_oracle_alignment, py::arg("motion"), py::arg("audio"),
          py::arg("config"),
          "Correlation between generated lip motion and the audio's true drive signal.");
    m.def("boundary_ratio", &py_boundary_ratio, py::arg("sequences"), py::arg("window_len"),
          "Seam jump size relative to within-window jumps, pooled over sequences.");
    m.def("sampling_grid",
          [](int64_t total_steps, int64_t steps) { return sampling_grid(total_steps, steps); },
          py::arg("total_steps"), py::arg("steps"),
          "Reverse-pass step indices for a reduced-step sampler.");

    m.attr("__version__") = "0.1.0";
}
