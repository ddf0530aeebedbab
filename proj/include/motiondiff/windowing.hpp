#pragma once

#include "motiondiff/diffusion.hpp"

namespace motiondiff {

// Long-form generation by sliding the denoiser's window across the audio
// track: every segment synthesizes W frames conditioned on the K frames
// generated just before it (carried over verbatim) and their audio; a short
// final segment runs null-padded and is trimmed to length. `base` supplies
// the non-audio conditions (gaze, distance, emotion), typically from
// resolve_defaults; it must not carry audio or prefix entries. The result
// has exactly audio.rows() frames.
Tensor generate_long(Denoiser& model, const NoiseSchedule& sched, const Tensor& audio,
                     const ConditionBundle& base, const SamplerConfig& sampler, Rng& rng);

}  // namespace motiondiff
