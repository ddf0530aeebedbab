#include "motiondiff/conditioning.hpp"

#include "motiondiff/error.hpp"

namespace motiondiff {

const char* condition_name(Condition c) {
    switch (c) {
        case Condition::Audio: return "audio";
        case Condition::Gaze: return "gaze";
        case Condition::Distance: return "distance";
        case Condition::Emotion: return "emotion";
        case Condition::Prefix: return "prefix";
    }
    return "?";
}

bool ConditionBundle::has(Condition c) const {
    switch (c) {
        case Condition::Audio: return has_audio;
        case Condition::Gaze: return has_gaze;
        case Condition::Distance: return has_distance;
        case Condition::Emotion: return has_emotion;
        case Condition::Prefix: return has_prefix;
    }
    return false;
}

ConditionBundle ConditionBundle::without(Condition c) const {
    ConditionBundle out = *this;
    switch (c) {
        case Condition::Audio:
            out.has_audio = false;
            out.audio = Tensor();
            out.audio_valid = 0;
            break;
        case Condition::Gaze:
            out.has_gaze = false;
            out.g_theta = out.g_phi = 0.0;
            break;
        case Condition::Distance:
            out.has_distance = false;
            out.distance = 0.0;
            break;
        case Condition::Emotion:
            out.has_emotion = false;
            out.emotion = Tensor();
            break;
        case Condition::Prefix:
            out.has_prefix = false;
            out.motion_pre = Tensor();
            out.audio_pre = Tensor();
            break;
    }
    return out;
}

ConditionBundle dropout_conditions(const ConditionBundle& cond, int64_t window_len, Rng& rng,
                                   const DropoutRates& rates) {
    require(window_len >= 1, ErrorKind::Contract, "dropout_conditions needs window_len >= 1");
    // Fixed draw order and count, independent of outcomes.
    const bool drop_audio = rng.bernoulli(rates.each);
    const bool drop_gaze = rng.bernoulli(rates.each);
    const bool drop_distance = rng.bernoulli(rates.each);
    const bool drop_emotion = rng.bernoulli(rates.each);
    const bool drop_prefix = rng.bernoulli(rates.prefix);
    const bool drop_tail = rng.bernoulli(rates.audio_tail);
    const int64_t tail = rng.uniform_int(1, std::max<int64_t>(1, window_len / 4));

    ConditionBundle out = cond;
    if (drop_audio && out.has_audio) out = out.without(Condition::Audio);
    if (drop_gaze && out.has_gaze) out = out.without(Condition::Gaze);
    if (drop_distance && out.has_distance) out = out.without(Condition::Distance);
    if (drop_emotion && out.has_emotion) out = out.without(Condition::Emotion);
    if (drop_prefix && out.has_prefix) out = out.without(Condition::Prefix);
    if (drop_tail && out.has_audio) out.audio_valid = std::max<int64_t>(1, out.audio_valid - tail);
    return out;
}

ConditionBundle resolve_defaults(std::optional<std::pair<double, double>> gaze,
                                 std::optional<double> distance, const Tensor& emotion,
                                 double mean_distance, int64_t emotion_dim) {
    ConditionBundle out;
    out.has_gaze = true;
    out.g_theta = gaze ? gaze->first : 0.0;
    out.g_phi = gaze ? gaze->second : 0.0;
    out.has_distance = true;
    out.distance = distance ? *distance : mean_distance;
    if (!emotion.empty()) {
        require(emotion.size() == emotion_dim, ErrorKind::Config,
                "emotion vector has " + std::to_string(emotion.size()) + " entries, expected " +
                    std::to_string(emotion_dim));
        out.has_emotion = true;
        out.emotion = emotion;
    }
    return out;
}

std::vector<WindowPlan> plan_windows(int64_t total_frames, int64_t window_len, int64_t overlap) {
    require(total_frames >= 1, ErrorKind::Contract, "plan_windows needs at least one frame");
    require(window_len >= 1, ErrorKind::Contract, "window_len must be positive");
    require(overlap >= 0 && overlap < window_len, ErrorKind::Contract,
            "overlap must lie in [0, window_len)");
    std::vector<WindowPlan> plan;
    for (int64_t start = 0; start < total_frames; start += window_len) {
        WindowPlan w;
        w.start = start;
        w.emit = std::min(window_len, total_frames - start);
        w.carry_prefix = (start > 0) && overlap > 0;
        plan.push_back(w);
    }
    return plan;
}

}  // namespace motiondiff
