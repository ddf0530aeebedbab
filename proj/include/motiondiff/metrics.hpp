#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "motiondiff/capp.hpp"
#include "motiondiff/windowing.hpp"
#include "motiondiff/world.hpp"

namespace motiondiff {

// Mean over adjacent frame pairs of the Euclidean norm of the rotation-angle
// difference (motion channels 0..2); translation and dynamics excluded.
// Unit-preserving: feed radians, read radians.
double pose_variation_intensity(const Tensor& motion);

// gaze: angular distance in degrees between the requested (theta, phi)
// direction and the mean generated rotation direction (yaw/pitch channels).
// distance: |requested d - mean of the distance channel|.
std::pair<double, double> control_adherence(const Tensor& motion, double g_theta, double g_phi,
                                            double d);

// Mean frame-to-frame jump at window boundaries divided by the mean jump
// inside windows, pooled over all sequences. Needs at least one of each.
double boundary_ratio(const std::vector<Tensor>& sequences, int64_t window_len);

struct MetricReport {
    double delta_p = 0.0;
    double capp = 0.0;
    double oracle_alignment = 0.0;
    double gaze_error = 0.0;      // degrees
    double distance_error = 0.0;  // world distance units
    double boundary_ratio = 0.0;
};

// Generates one sequence per eval sample (same audio, same requested
// conditions) and pools every MetricReport field. capp is 0 when no CAPP
// model is supplied. rng seeds the per-sample generation forks.
MetricReport evaluate_model(Denoiser& model, const NoiseSchedule& sched, CappModel* capp,
                            const WorldConfig& world_cfg, const std::vector<WorldSample>& eval_set,
                            const SamplerConfig& sampler, Rng& rng);

struct SweepCell {
    double lambda_audio = 0.0;
    double lambda_gaze = 0.0;
    int64_t steps = 0;
    MetricReport report;
};

// Full grid over (lambda_audio, lambda_gaze, steps). Each cell reseeds from
// (seed, cell index), so any execution order produces identical results.
std::vector<SweepCell> ablation_sweep(Denoiser& model, const NoiseSchedule& sched, CappModel* capp,
                                      const WorldConfig& world_cfg,
                                      const std::vector<WorldSample>& eval_set,
                                      const std::vector<double>& lambda_a_grid,
                                      const std::vector<double>& lambda_g_grid,
                                      const std::vector<int64_t>& steps_grid, uint64_t seed);

// Header row plus one line per cell; deterministic field order.
std::string sweep_csv(const std::vector<SweepCell>& cells);

}  // namespace motiondiff
