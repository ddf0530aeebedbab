#include "motiondiff/windowing.hpp"

#include <algorithm>

#include "motiondiff/error.hpp"

namespace motiondiff {

Tensor generate_long(Denoiser& model, const NoiseSchedule& sched, const Tensor& audio,
                     const ConditionBundle& base, const SamplerConfig& sampler, Rng& rng) {
    const DenoiserConfig& cfg = model.config();
    require(audio.rank() == 2 && audio.cols() == cfg.audio_feat_dim, ErrorKind::Dimension,
            "audio must be [frames x " + std::to_string(cfg.audio_feat_dim) + "], got " +
                shape_to_string(audio.shape()));
    require(!base.has_audio && !base.has_prefix, ErrorKind::Contract,
            "base conditions must leave audio and prefix to the window loop");

    const int64_t n = audio.rows();
    const int64_t w = cfg.window_len;
    const int64_t k = cfg.prefix_len;
    const int64_t m = cfg.motion_dim;
    Tensor out({n, m});
    for (const WindowPlan& wp : plan_windows(n, w, k)) {
        ConditionBundle cond = base;
        cond.has_audio = true;
        cond.audio = Tensor({w, cfg.audio_feat_dim});
        std::copy(audio.data() + wp.start * audio.cols(),
                  audio.data() + (wp.start + wp.emit) * audio.cols(), cond.audio.data());
        cond.audio_valid = wp.emit;
        if (wp.carry_prefix) {
            cond.has_prefix = true;
            cond.motion_pre = Tensor({k, m});
            std::copy(out.data() + (wp.start - k) * m, out.data() + wp.start * m,
                      cond.motion_pre.data());
            cond.audio_pre = Tensor({k, audio.cols()});
            std::copy(audio.data() + (wp.start - k) * audio.cols(),
                      audio.data() + wp.start * audio.cols(), cond.audio_pre.data());
        }
        Tensor window = sample_window(model, sched, cond, sampler, rng);
        std::copy(window.data(), window.data() + wp.emit * m, out.data() + wp.start * m);
    }
    return out;
}

}  // namespace motiondiff
