#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "motiondiff/capp.hpp"
#include "motiondiff/config.hpp"
#include "motiondiff/dataset.hpp"
#include "motiondiff/denoiser.hpp"
#include "motiondiff/diffusion.hpp"

namespace motiondiff {

// Metadata saved next to a weight file as <path>.json: the full config echo
// plus what later commands need (the training-set mean distance feeding
// resolve_defaults). Loading a model goes through the echo, so the rebuilt
// architecture always matches the stored tensors unless the file pair is
// inconsistent, which load_model_weights rejects.
struct ModelMeta {
    std::string kind;  // "denoiser" or "capp"
    RunConfig config;
    double mean_distance = 0.0;
    int64_t trained_iterations = 0;
};

void save_model(const ParameterList& params, const ModelMeta& meta, const std::string& path);
ModelMeta load_model_meta(const std::string& path);
void load_model_weights(const ParameterList& params, const std::string& path);

// A checkpoint rebuilt into a live model; the architecture comes from the
// sidecar's config echo, so stored tensors always fit unless the pair is
// inconsistent, which loading rejects.
struct LoadedDenoiser {
    ModelMeta meta;
    std::unique_ptr<Denoiser> model;
    std::unique_ptr<NoiseSchedule> sched;
};
LoadedDenoiser load_denoiser(const std::string& ckpt_path);

struct LoadedCapp {
    ModelMeta meta;
    std::unique_ptr<CappModel> model;
};
LoadedCapp load_capp(const std::string& ckpt_path);

// CSV text for a generated motion tensor: header row naming pose/dyn
// channels, then one row per frame at full double precision.
std::string motion_csv(const Tensor& motion, int64_t pose_dim);

struct TrainResult {
    // (iteration, minibatch loss) at every multiple of 100 plus the final
    // iteration; empty for zero-iteration runs.
    std::vector<std::pair<int64_t, double>> loss_log;
    double mean_distance = 0.0;
};

void write_loss_csv(const std::vector<std::pair<int64_t, double>>& log, const std::string& path);

// Trains the x0-prediction objective on random windows drawn from the
// dataset, with condition dropout, and writes checkpoint + sidecar. The
// dataset must have been generated under the same world config. When
// resume_path is non-empty, starts from those weights instead of fresh
// initialization; the run is deterministic given (weights, cfg.train.seed).
// A non-finite loss aborts with the iteration number.
TrainResult train_denoiser(const RunConfig& cfg, const std::string& dataset_dir,
                           const std::string& ckpt_path, const std::string& resume_path = "");

// Trains the contrastive dual encoder. Every batch pairs windows cut from a
// single sample at distinct starts, so static per-sample attributes (gaze,
// distance, emotion offsets) carry no discriminative signal and nearby
// starts serve as hard shifted negatives; temporal alignment is the only
// thing left to learn.
TrainResult train_capp(const RunConfig& cfg, const std::string& dataset_dir,
                       const std::string& ckpt_path);

}  // namespace motiondiff
