#pragma once

#include <cstdint>
#include <vector>

#include "motiondiff/rng.hpp"
#include "motiondiff/tensor.hpp"

namespace motiondiff {

// Procedural ground-truth generator. Two latent drivers evolve as AR(1)
// processes: a fast "content" channel and a slower "prosody" channel. Audio
// features are a fixed random linear map of [content, prosody] plus
// observation noise; the map has a known pseudo-inverse, so content is
// recoverable from audio and generated motion can be scored against it.
//
// Motion frames are [pose | dyn]:
//   pose[0..2]  rotation angles: gaze offset (theta, phi, 0) plus a leaky
//               integrator driven by prosody delayed by `lag` frames
//   pose[3]     translation: distance d plus a slow AR(1)
//   pose[4..5]  translation: independent slow AR(1)
//   dyn[lip]    tanh(lip_scale * content) plus observation noise
//   dyn[rest]   slow AR(1) offset by emotion_map * e
struct WorldConfig {
    uint64_t seed = 0;  // seeds the fixed world maps, not per-sample draws
    int64_t frame_rate = 25;
    int64_t audio_feat_dim = 16;
    int64_t pose_dim = 6;  // 3 rotation angles + 3 translation components
    int64_t dyn_dim = 16;
    std::vector<int64_t> lip_channels = {0, 1, 2, 3, 4, 5};  // within [0, dyn_dim)
    int64_t emotion_dim = 8;
    int64_t lag = 2;  // frames of pose response delay
    double noise_level = 0.05;

    int64_t motion_dim() const { return pose_dim + dyn_dim; }
    void validate() const;
    bool operator==(const WorldConfig&) const = default;
};

// Fixed random structure shared by every sample drawn under one config.
struct WorldMaps {
    Tensor audio_map;    // [audio_feat_dim x 2], columns scale [content, prosody]
    Tensor audio_pinv;   // [2 x audio_feat_dim], exact left inverse of audio_map
    Tensor lip_scale;    // [lip_channels.size()]
    Tensor pose_mix;     // [3], per-angle prosody coupling
    Tensor emotion_map;  // [dyn_dim - lip_channels.size() x emotion_dim]
};

WorldMaps world_maps(const WorldConfig& cfg);

struct WorldSample {
    Tensor audio;   // [length x audio_feat_dim]
    Tensor motion;  // [length x pose_dim + dyn_dim]
    double g_theta = 0.0;
    double g_phi = 0.0;
    double d = 0.0;
    Tensor e;  // [emotion_dim]
    // Latent drivers, exposed for oracles and diagnostics only.
    Tensor content;  // [length]
    Tensor prosody;  // [length]
};

// Deterministic given (cfg, length, conditions, rng state). e may be empty,
// which is treated as a zero offset.
WorldSample generate_sample(const WorldConfig& cfg, int64_t length, double g_theta, double g_phi,
                            double d, const Tensor& e, Rng& rng);

// Content channel estimated from audio via the known inverse map, [length].
Tensor recover_content(const Tensor& audio, const WorldConfig& cfg);

// Mean Pearson correlation across lip channels between observed lip motion
// and tanh(lip_scale * recovered content). Degenerate (constant) series
// score 0 by convention. Requires at least 8 frames.
double oracle_alignment(const Tensor& motion, const Tensor& audio, const WorldConfig& cfg);

}  // namespace motiondiff
