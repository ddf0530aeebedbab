#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "motiondiff/denoiser.hpp"

namespace motiondiff {

struct ScheduleConfig {
    int64_t total_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    void validate() const;
    bool operator==(const ScheduleConfig&) const = default;
};

// Forward-process constants, 1-indexed by step t in [1, T]. beta rises
// linearly from beta_start at t=1 to beta_end at t=T; alpha_bar(t) is the
// running product of (1 - beta).
class NoiseSchedule {
public:
    explicit NoiseSchedule(const ScheduleConfig& cfg = {});

    int64_t total_steps() const { return cfg_.total_steps; }
    double beta(int64_t t) const;
    double alpha_bar(int64_t t) const;

private:
    ScheduleConfig cfg_;
    std::vector<double> beta_;
    std::vector<double> alpha_bar_;
};

// x^t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps with eps ~ N(0, I)
// drawn row-major from rng; the draw is copied to noise_out when given.
Tensor forward_sample(const NoiseSchedule& sched, const Tensor& x0, int64_t t, Rng& rng,
                      Tensor* noise_out = nullptr);

// Mean squared error between the clean windows and the model's estimate at
// explicitly chosen steps and noise; the pure form the rng overload and the
// tests share. noise must match x0's shape.
Var training_loss_at(Denoiser& model, const NoiseSchedule& sched, const Tensor& x0,
                     const std::vector<ConditionBundle>& cond, const std::vector<int64_t>& t,
                     const Tensor& noise);

// Draws t_b ~ U[1, T] per sample (in batch order), then one noise tensor
// for the whole batch, then defers to training_loss_at.
Var training_loss(Denoiser& model, const NoiseSchedule& sched, const Tensor& x0,
                  const std::vector<ConditionBundle>& cond, Rng& rng);

struct CfgScales {
    double lambda_audio = 0.5;
    double lambda_gaze = 1.0;
    double lambda_distance = 0.0;
    double lambda_emotion = 0.0;
    double lambda_prefix = 0.0;

    double scale(Condition c) const;
    bool operator==(const CfgScales&) const = default;
};

// Conditions that take part in guidance: present in the bundle and carrying
// a nonzero scale, in a fixed order.
std::vector<Condition> active_guidance(const ConditionBundle& cond, const CfgScales& scales);

// Guided estimate (1 + sum λ_c) full − Σ λ_c dropped[c]. Every entry in
// `dropped` must carry a nonzero scale and match full's shape.
Tensor cfg_combine(const Tensor& full, const std::vector<std::pair<Condition, Tensor>>& dropped,
                   const CfgScales& scales);

struct SamplerConfig {
    int64_t steps = 50;
    CfgScales scales;
};

// Deterministic skip grid for the reverse pass: `steps` strictly decreasing
// indices starting at T and ending at 1 (steps=1 gives {T}), evenly spaced
// in exact integer arithmetic.
std::vector<int64_t> sampling_grid(int64_t total_steps, int64_t steps);

// Deterministic reverse update: re-derives the noise direction from (x,
// x0_hat) at step t and re-noises the estimate down to t_next < t. t_next
// of 0 finishes the chain and returns x0_hat itself.
Tensor ddim_step(const NoiseSchedule& sched, const Tensor& x, const Tensor& x0_hat, int64_t t,
                 int64_t t_next);

// Reverse process for one window. Draws the start noise [W x motion_dim]
// from rng (its only rng use), then runs the grid deterministically; each
// step fans the full pass and one dropped pass per active guidance condition
// into a single batched forward. The deterministic update keeps the implied
// noise direction: x_{t'} = sqrt(abar_{t'}) x0hat + sqrt(1-abar_{t'}) eps_hat.
Tensor sample_window(Denoiser& model, const NoiseSchedule& sched, const ConditionBundle& cond,
                     const SamplerConfig& sampler, Rng& rng);

}  // namespace motiondiff
