#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motiondiff/conditioning.hpp"
#include "motiondiff/nn.hpp"

namespace motiondiff {

struct DenoiserConfig {
    int64_t motion_dim = 22;
    int64_t audio_feat_dim = 16;
    int64_t emotion_dim = 8;
    int64_t window_len = 32;  // W, frames predicted per call
    int64_t prefix_len = 8;   // K carried-over frames; 0 disables prefix tokens
    int64_t embed_dim = 96;
    int64_t heads = 4;
    int64_t layers = 3;
    int64_t total_steps = 1000;  // diffusion steps the time embedding covers

    void validate() const;
    // [t | g | d | e | X_pre | A_pre | A | X]
    int64_t tokens_per_sample() const { return 4 + 2 * prefix_len + 2 * window_len; }
    bool operator==(const DenoiserConfig&) const = default;
};

// Transformer that predicts the clean window X^0 from a noised window X^t,
// the step index, and the condition bundle. Every token stream is projected
// to embed_dim; absent conditions are swapped for learned null embeddings,
// so the same weights serve conditional and unconditional passes.
class Denoiser {
public:
    Denoiser(const DenoiserConfig& cfg, Rng& rng);

    // Batched differentiable pass. x_t packs the windows as [B * W x
    // motion_dim]; t and cond give one entry per sample. Returns the
    // predicted clean windows, same shape as x_t.
    Var forward(const Tensor& x_t, const std::vector<int64_t>& t,
                const std::vector<ConditionBundle>& cond);

    // Single-window convenience wrapper; never records gradients.
    Tensor denoise(const Tensor& x_t, int64_t t, const ConditionBundle& cond);

    void params(ParameterList& out);
    int64_t parameter_count() const;  // closed form; tests check it against params()
    const DenoiserConfig& config() const { return cfg_; }

    // Cumulative forward count in samples (a B-sample batch counts B), so
    // guidance variants fanned into one batch are still billed per pass.
    int64_t calls() const { return calls_; }
    void reset_calls() { calls_ = 0; }

private:
    DenoiserConfig cfg_;
    Linear proj_motion_, proj_audio_, proj_gaze_, proj_distance_, proj_emotion_;
    Linear t_mlp1_, t_mlp2_;
    Parameter type_time_, type_gaze_, type_distance_, type_emotion_;
    Parameter type_pre_motion_, type_pre_audio_, type_audio_, type_motion_;
    Parameter null_audio_, null_gaze_, null_distance_, null_emotion_;
    Parameter null_pre_motion_, null_pre_audio_;
    TransformerEncoder encoder_;
    Linear head_;
    Tensor time_table_;  // [total_steps + 1 x embed_dim], row t for step t
    Tensor pe_table_;    // [prefix_len + window_len x embed_dim]
    int64_t calls_ = 0;
};

}  // namespace motiondiff
