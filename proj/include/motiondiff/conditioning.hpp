#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "motiondiff/rng.hpp"
#include "motiondiff/tensor.hpp"

namespace motiondiff {

enum class Condition { Audio, Gaze, Distance, Emotion, Prefix };

const char* condition_name(Condition c);

// Runtime condition values for one window. Absent conditions are flagged
// explicitly; the denoiser substitutes learned null embeddings for them, so
// zeros here never masquerade as data. X_pre and A_pre travel together as
// the Prefix condition. audio_valid marks how many leading audio frames are
// real; frames past it are treated as null tokens (training-time tail
// dropout and the null-padded short final window use the same mechanism).
struct ConditionBundle {
    bool has_audio = false;
    Tensor audio;  // [W x audio_feat_dim] when present
    int64_t audio_valid = 0;

    bool has_gaze = false;
    double g_theta = 0.0;
    double g_phi = 0.0;

    bool has_distance = false;
    double distance = 0.0;

    bool has_emotion = false;
    Tensor emotion;  // [emotion_dim] when present

    bool has_prefix = false;
    Tensor motion_pre;  // [K x motion_dim] when present
    Tensor audio_pre;   // [K x audio_feat_dim] when present

    bool has(Condition c) const;
    // Copy with one condition nulled; Prefix clears both X_pre and A_pre.
    ConditionBundle without(Condition c) const;
};

struct DropoutRates {
    double each = 0.1;        // A, g, d, e independently
    double prefix = 0.5;      // (X_pre, A_pre) jointly
    double audio_tail = 0.1;  // truncate last j frames of A, j ~ U[1, W/4]
};

// Training-time condition dropout. Always consumes the same number of rng
// draws regardless of outcomes, so downstream draw alignment is stable.
ConditionBundle dropout_conditions(const ConditionBundle& cond, int64_t window_len, Rng& rng,
                                   const DropoutRates& rates = {});

// Fills unset generation conditions with the documented defaults: gaze
// forward-facing (0, 0), distance = the training-set mean recorded at
// checkpoint time, emotion absent (null token).
ConditionBundle resolve_defaults(std::optional<std::pair<double, double>> gaze,
                                 std::optional<double> distance, const Tensor& emotion,
                                 double mean_distance, int64_t emotion_dim);

// Sliding-window schedule over N audio frames: consecutive segments of W new
// frames, the final segment possibly shorter. emit counts the frames each
// window contributes to the output.
struct WindowPlan {
    int64_t start = 0;  // first audio frame of this window
    int64_t emit = 0;   // real frames in [1, W]; audio past emit is null-padded
    bool carry_prefix = false;
};

std::vector<WindowPlan> plan_windows(int64_t total_frames, int64_t window_len, int64_t overlap);

}  // namespace motiondiff
