#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "motiondiff/checkpoint.hpp"
#include "motiondiff/config.hpp"
#include "motiondiff/dataset.hpp"
#include "motiondiff/error.hpp"
#include "motiondiff/harness.hpp"
#include "motiondiff/metrics.hpp"
#include "motiondiff/windowing.hpp"

using namespace motiondiff;

namespace {

struct Cli {
    std::string config_path;

    // world generate
    int64_t count = 800;
    int64_t length = 0;  // 0: 4 windows
    uint64_t world_gen_seed = 1;
    std::string world_out;

    // train
    std::string train_data;
    std::string train_out;
    std::string resume;
    int64_t iterations = -1;
    uint64_t train_seed = 0;
    CLI::Option* train_seed_opt = nullptr;
    CLI::Option* capp_seed_opt = nullptr;
    CLI::Option* iters_opt = nullptr;
    CLI::Option* capp_iters_opt = nullptr;

    // generate
    std::string gen_ckpt;
    std::string audio_path;
    uint64_t world_seed = 1;
    int64_t gen_length = 0;
    std::vector<double> gaze;
    double distance = 0.0;
    CLI::Option* distance_opt = nullptr;
    std::vector<double> emotion;
    double lambda_a = 0.0;
    double lambda_g = 0.0;
    int64_t steps = 0;
    CLI::Option* gen_lambda_a_opt = nullptr;
    CLI::Option* gen_lambda_g_opt = nullptr;
    CLI::Option* gen_steps_opt = nullptr;
    CLI::Option* ev_lambda_a_opt = nullptr;
    CLI::Option* ev_lambda_g_opt = nullptr;
    CLI::Option* ev_steps_opt = nullptr;
    uint64_t gen_seed = 1;
    std::string gen_out;

    // evaluate
    std::string eval_ckpt;
    std::string capp_ckpt;
    std::string eval_data;
    uint64_t eval_seed = 1;
    std::vector<double> sweep_lambda_a;
    std::vector<double> sweep_lambda_g;
    std::vector<int64_t> sweep_steps;
    std::string eval_out;
};

RunConfig load_cfg(const Cli& cli) {
    RunConfig cfg = cli.config_path.empty() ? RunConfig{} : load_config_file(cli.config_path);
    cfg.validate();
    return cfg;
}

std::string default_path(const std::string& flag_value, const std::string& config_value) {
    return flag_value.empty() ? resolve_path(config_value) : flag_value;
}

Tensor load_audio_file(const std::string& path) {
    const Checkpoint c = Checkpoint::load(path);
    require(c.contains("audio"), ErrorKind::Io, "'" + path + "' has no audio entry");
    return c.get("audio");
}

void write_motion_csv(const Tensor& motion, int64_t pose_dim, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        raise(ErrorKind::Io, "cannot write '" + path + "'");
    }
    f << motion_csv(motion, pose_dim);
    require(bool(f), ErrorKind::Io, "failed writing '" + path + "'");
}

void check_config_matches(const Cli& cli, const RunConfig& cfg, const ModelMeta& meta) {
    if (cli.config_path.empty()) {
        return;
    }
    require(cfg.world == meta.config.world && cfg.denoiser == meta.config.denoiser &&
                cfg.schedule == meta.config.schedule,
            ErrorKind::Config,
            "checkpoint/config mismatch: the checkpoint was trained under a different "
            "world/denoiser/schedule than '" + cli.config_path + "'");
}

int cmd_world_generate(const Cli& cli) {
    const RunConfig cfg = load_cfg(cli);
    const std::string out = default_path(cli.world_out, cfg.paths.dataset);
    const int64_t length = cli.length > 0 ? cli.length : 4 * cfg.denoiser.window_len;
    const DatasetManifest m = write_dataset(cfg, cli.count, length, cli.world_gen_seed, out);
    std::printf("wrote %lld samples x %lld frames (%lld total) to %s\n",
                static_cast<long long>(m.count), static_cast<long long>(m.length),
                static_cast<long long>(m.total_frames), out.c_str());
    std::printf("config hash %s, seed %llu\n", m.hash.c_str(),
                static_cast<unsigned long long>(m.seed));
    return 0;
}

int cmd_train_denoiser(Cli& cli) {
    RunConfig cfg = load_cfg(cli);
    if (cli.train_seed_opt->count() > 0) {
        cfg.train.seed = cli.train_seed;
    }
    if (cli.iters_opt->count() > 0) {
        cfg.train.iterations = cli.iterations;
    }
    cfg.validate();
    const std::string data = default_path(cli.train_data, cfg.paths.dataset);
    const std::string out = default_path(cli.train_out, cfg.paths.checkpoint);
    const TrainResult r = train_denoiser(cfg, data, out, cli.resume);
    write_loss_csv(r.loss_log, out + ".loss.csv");
    std::printf("trained %lld iterations; checkpoint %s; loss log %s\n",
                static_cast<long long>(cfg.train.iterations), out.c_str(),
                (out + ".loss.csv").c_str());
    if (!r.loss_log.empty()) {
        std::printf("final loss %.6f\n", r.loss_log.back().second);
    }
    return 0;
}

int cmd_train_capp(Cli& cli) {
    RunConfig cfg = load_cfg(cli);
    if (cli.capp_seed_opt->count() > 0) {
        cfg.capp_train.seed = cli.train_seed;
    }
    if (cli.capp_iters_opt->count() > 0) {
        cfg.capp_train.iterations = cli.iterations;
    }
    cfg.validate();
    const std::string data = default_path(cli.train_data, cfg.paths.dataset);
    const std::string out = default_path(cli.train_out, cfg.paths.capp_checkpoint);
    const TrainResult r = train_capp(cfg, data, out);
    write_loss_csv(r.loss_log, out + ".loss.csv");
    std::printf("trained %lld iterations; checkpoint %s; loss log %s\n",
                static_cast<long long>(cfg.capp_train.iterations), out.c_str(),
                (out + ".loss.csv").c_str());
    if (!r.loss_log.empty()) {
        std::printf("final loss %.6f\n", r.loss_log.back().second);
    }
    return 0;
}

int cmd_generate(const Cli& cli) {
    const std::string ckpt =
        cli.gen_ckpt.empty() ? resolve_path(RunConfig{}.paths.checkpoint) : cli.gen_ckpt;
    LoadedDenoiser den = load_denoiser(ckpt);
    const ModelMeta& meta = den.meta;
    if (!cli.config_path.empty()) {
        check_config_matches(cli, load_cfg(cli), meta);
    }
    const RunConfig& cfg = meta.config;
    Denoiser& model = *den.model;
    NoiseSchedule& sched = *den.sched;

    Tensor audio;
    if (!cli.audio_path.empty()) {
        audio = load_audio_file(cli.audio_path);
    } else {
        const int64_t length = cli.gen_length > 0 ? cli.gen_length : 4 * cfg.denoiser.window_len;
        Rng wrng(cli.world_seed);
        audio = generate_sample(cfg.world, length, 0.0, 0.0, meta.mean_distance, Tensor{}, wrng)
                    .audio;
    }

    std::optional<std::pair<double, double>> gaze;
    if (!cli.gaze.empty()) {
        gaze = std::make_pair(cli.gaze[0], cli.gaze[1]);
    }
    std::optional<double> dist;
    if (cli.distance_opt->count() > 0) {
        dist = cli.distance;
    }
    Tensor emotion;
    if (!cli.emotion.empty()) {
        require(static_cast<int64_t>(cli.emotion.size()) == cfg.world.emotion_dim,
                ErrorKind::Dimension,
                "--emotion needs " + std::to_string(cfg.world.emotion_dim) + " values, got " +
                    std::to_string(cli.emotion.size()));
        emotion = Tensor::from_vector(cli.emotion);
    }
    const ConditionBundle base =
        resolve_defaults(gaze, dist, emotion, meta.mean_distance, cfg.world.emotion_dim);

    SamplerConfig sampler;
    sampler.steps = cli.gen_steps_opt->count() > 0 ? cli.steps : cfg.steps;
    sampler.scales = cfg.cfg_defaults;
    if (cli.gen_lambda_a_opt->count() > 0) {
        sampler.scales.lambda_audio = cli.lambda_a;
    }
    if (cli.gen_lambda_g_opt->count() > 0) {
        sampler.scales.lambda_gaze = cli.lambda_g;
    }

    model.reset_calls();
    Rng rng(cli.gen_seed);
    const Tensor motion = generate_long(model, sched, audio, base, sampler, rng);
    std::printf("denoiser calls: %lld\n", static_cast<long long>(model.calls()));

    const std::string out = cli.gen_out.empty() ? resolve_path("motion") : cli.gen_out;
    Checkpoint bin;
    bin.put("motion", motion);
    bin.put("audio", audio);
    bin.save(out + ".bin");
    write_motion_csv(motion, cfg.world.pose_dim, out + ".csv");
    std::printf("wrote %lld frames to %s.bin and %s.csv\n",
                static_cast<long long>(motion.rows()), out.c_str(), out.c_str());
    return 0;
}

int cmd_evaluate(const Cli& cli) {
    const std::string ckpt =
        cli.eval_ckpt.empty() ? resolve_path(RunConfig{}.paths.checkpoint) : cli.eval_ckpt;
    const std::string capp_ckpt =
        cli.capp_ckpt.empty() ? resolve_path(RunConfig{}.paths.capp_checkpoint) : cli.capp_ckpt;
    LoadedDenoiser den = load_denoiser(ckpt);
    LoadedCapp capp_loaded = load_capp(capp_ckpt);
    const ModelMeta& meta = den.meta;
    require(capp_loaded.meta.config.world == meta.config.world, ErrorKind::Config,
            "denoiser and CAPP checkpoints were trained under different worlds");
    if (!cli.config_path.empty()) {
        check_config_matches(cli, load_cfg(cli), meta);
    }
    const RunConfig& cfg = meta.config;
    Denoiser& model = *den.model;
    NoiseSchedule& sched = *den.sched;
    CappModel& capp = *capp_loaded.model;

    const std::string data = default_path(cli.eval_data, cfg.paths.dataset);
    const DatasetManifest manifest = read_manifest(data);
    require(manifest.config.world == cfg.world, ErrorKind::Config,
            "eval dataset was generated under a different world config");
    require(manifest.count >= 1, ErrorKind::Contract, "eval set is empty");
    std::vector<WorldSample> eval_set;
    eval_set.reserve(static_cast<size_t>(manifest.count));
    for (int64_t i = 0; i < manifest.count; ++i) {
        eval_set.push_back(load_sample(data, i));
    }

    SamplerConfig sampler;
    sampler.steps = cli.ev_steps_opt->count() > 0 ? cli.steps : cfg.steps;
    sampler.scales = cfg.cfg_defaults;
    if (cli.ev_lambda_a_opt->count() > 0) {
        sampler.scales.lambda_audio = cli.lambda_a;
    }
    if (cli.ev_lambda_g_opt->count() > 0) {
        sampler.scales.lambda_gaze = cli.lambda_g;
    }

    const std::string out = default_path(cli.eval_out, cfg.paths.report);
    const bool sweep = !cli.sweep_lambda_a.empty() || !cli.sweep_lambda_g.empty() ||
                       !cli.sweep_steps.empty();
    std::string csv;
    if (sweep) {
        const std::vector<double> la_grid =
            cli.sweep_lambda_a.empty() ? std::vector<double>{sampler.scales.lambda_audio}
                                       : cli.sweep_lambda_a;
        const std::vector<double> lg_grid =
            cli.sweep_lambda_g.empty() ? std::vector<double>{sampler.scales.lambda_gaze}
                                       : cli.sweep_lambda_g;
        const std::vector<int64_t> steps_grid =
            cli.sweep_steps.empty() ? std::vector<int64_t>{sampler.steps} : cli.sweep_steps;
        const std::vector<SweepCell> cells = ablation_sweep(
            model, sched, &capp, cfg.world, eval_set, la_grid, lg_grid, steps_grid, cli.eval_seed);
        csv = sweep_csv(cells);
    } else {
        // The paper's protocol: three generations per audio under distinct
        // seeds, metrics averaged.
        MetricReport avg;
        for (uint64_t rep = 0; rep < 3; ++rep) {
            Rng rng(cli.eval_seed + rep);
            const MetricReport r =
                evaluate_model(model, sched, &capp, cfg.world, eval_set, sampler, rng);
            avg.delta_p += r.delta_p / 3.0;
            avg.capp += r.capp / 3.0;
            avg.oracle_alignment += r.oracle_alignment / 3.0;
            avg.gaze_error += r.gaze_error / 3.0;
            avg.distance_error += r.distance_error / 3.0;
            avg.boundary_ratio += r.boundary_ratio / 3.0;
        }
        SweepCell cell;
        cell.lambda_audio = sampler.scales.lambda_audio;
        cell.lambda_gaze = sampler.scales.lambda_gaze;
        cell.steps = sampler.steps;
        cell.report = avg;
        csv = sweep_csv({cell});
        std::printf("delta_p %.6f capp %.6f oracle_alignment %.6f gaze_error %.6f "
                    "distance_error %.6f boundary_ratio %.6f\n",
                    avg.delta_p, avg.capp, avg.oracle_alignment, avg.gaze_error,
                    avg.distance_error, avg.boundary_ratio);
    }

    std::FILE* f = std::fopen(out.c_str(), "wb");
    if (f == nullptr) {
        raise(ErrorKind::Io, "cannot write report '" + out + "'");
    }
    std::fputs(csv.c_str(), f);
    if (std::fclose(f) != 0) {
        raise(ErrorKind::Io, "failed writing report '" + out + "'");
    }
    std::printf("report written to %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Cli cli;
    CLI::App app{"Conditional sequence-diffusion engine for audio-driven motion"};
    app.require_subcommand(1);
    app.add_option("--config", cli.config_path, "JSON run configuration file");
    app.set_help_all_flag("--help-all", "Print help for all subcommands");

    CLI::App* world = app.add_subcommand("world", "Synthetic world commands");
    world->require_subcommand(1);
    CLI::App* wgen = world->add_subcommand("generate", "Emit dataset shards plus a manifest");
    wgen->add_option("--count", cli.count, "Samples to generate")->check(CLI::PositiveNumber);
    wgen->add_option("--length", cli.length, "Frames per sample (default: 4 windows)");
    wgen->add_option("--seed", cli.world_gen_seed, "Dataset seed");
    wgen->add_option("--out", cli.world_out, "Dataset directory (default: config paths.dataset)");

    CLI::App* train = app.add_subcommand("train", "Training commands");
    train->require_subcommand(1);
    CLI::App* tden = train->add_subcommand("denoiser", "Train the diffusion denoiser");
    CLI::App* tcapp = train->add_subcommand("capp", "Train the contrastive alignment scorer");
    for (CLI::App* t : {tden, tcapp}) {
        t->add_option("--data", cli.train_data, "Dataset directory");
        t->add_option("--out", cli.train_out, "Checkpoint path");
    }
    tden->add_option("--resume", cli.resume, "Checkpoint to continue from");
    cli.train_seed_opt = tden->add_option("--seed", cli.train_seed, "Training seed override");
    cli.capp_seed_opt = tcapp->add_option("--seed", cli.train_seed, "Training seed override");
    cli.iters_opt = tden->add_option("--iterations", cli.iterations, "Iteration count override");
    cli.capp_iters_opt =
        tcapp->add_option("--iterations", cli.iterations, "Iteration count override");

    CLI::App* gen = app.add_subcommand("generate", "Generate motion from audio");
    gen->add_option("--ckpt", cli.gen_ckpt, "Denoiser checkpoint");
    gen->add_option("--audio", cli.audio_path, "Binary file with an audio entry");
    gen->add_option("--world-seed", cli.world_seed,
                    "Draw a fresh audio track from the world instead of --audio");
    gen->add_option("--length", cli.gen_length, "Frames for --world-seed audio");
    gen->add_option("--gaze", cli.gaze, "Gaze direction theta phi (radians)")->expected(2);
    cli.distance_opt = gen->add_option("--distance", cli.distance, "Face-to-camera distance");
    gen->add_option("--emotion", cli.emotion, "Emotion vector (emotion_dim values)");
    cli.gen_lambda_a_opt = gen->add_option("--lambda-a", cli.lambda_a, "Audio guidance scale");
    cli.gen_lambda_g_opt = gen->add_option("--lambda-g", cli.lambda_g, "Gaze guidance scale");
    cli.gen_steps_opt = gen->add_option("--steps", cli.steps, "Sampling steps");
    gen->add_option("--seed", cli.gen_seed, "Generation seed");
    gen->add_option("--out", cli.gen_out, "Output prefix for .bin and .csv");

    CLI::App* ev = app.add_subcommand("evaluate", "Score a checkpoint on an eval dataset");
    ev->add_option("--ckpt", cli.eval_ckpt, "Denoiser checkpoint");
    ev->add_option("--capp-ckpt", cli.capp_ckpt, "CAPP checkpoint");
    ev->add_option("--data", cli.eval_data, "Eval dataset directory");
    ev->add_option("--seed", cli.eval_seed, "Evaluation seed");
    cli.ev_lambda_a_opt = ev->add_option("--lambda-a", cli.lambda_a, "Audio guidance scale");
    cli.ev_lambda_g_opt = ev->add_option("--lambda-g", cli.lambda_g, "Gaze guidance scale");
    cli.ev_steps_opt = ev->add_option("--steps", cli.steps, "Sampling steps");
    ev->add_option("--sweep-lambda-a", cli.sweep_lambda_a, "Grid of audio scales to sweep");
    ev->add_option("--sweep-lambda-g", cli.sweep_lambda_g, "Grid of gaze scales to sweep");
    ev->add_option("--sweep-steps", cli.sweep_steps, "Grid of step counts to sweep");
    ev->add_option("--out", cli.eval_out, "Report CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ErrorKind::Usage);
    }

    try {
        if (wgen->parsed()) {
            return cmd_world_generate(cli);
        }
        if (tden->parsed()) {
            return cmd_train_denoiser(cli);
        }
        if (tcapp->parsed()) {
            return cmd_train_capp(cli);
        }
        if (gen->parsed()) {
            return cmd_generate(cli);
        }
        if (ev->parsed()) {
            return cmd_evaluate(cli);
        }
        std::fprintf(stderr, "error (usage): no subcommand given\n");
        return static_cast<int>(ErrorKind::Usage);
    } catch (const Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", kind_name(e.kind()), e.what());
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 9;
    }
}
