#include "motiondiff/world.hpp"

#include <cmath>

#include "motiondiff/error.hpp"

namespace motiondiff {

namespace {

// Process constants. Prosody decorrelates to ~12% by lag 3, which is what
// makes frame-shift sensitivity measurable; the pose leak keeps angular
// velocity dominated by the prosody drive rather than its own noise.
constexpr double kContentRho = 0.4;
constexpr double kProsodyRho = 0.5;
constexpr double kPoseLeak = 0.95;
constexpr double kPoseDrive = 0.04;
constexpr double kPoseNoiseScale = 0.2;  // times noise_level, per-step innovation
constexpr double kTransRho = 0.98;
constexpr double kTransStd = 0.05;
constexpr double kDynRho = 0.98;
constexpr double kDynStd = 0.3;
constexpr double kEmotionGain = 0.3;
constexpr int64_t kBurnIn = 200;

double ar1_innovation_std(double rho, double stationary_std) {
    return stationary_std * std::sqrt(1.0 - rho * rho);
}

}  // namespace

void WorldConfig::validate() const {
    require(frame_rate >= 1, ErrorKind::Config, "frame_rate must be positive");
    require(audio_feat_dim >= 2, ErrorKind::Config, "audio_feat_dim must be at least 2");
    require(pose_dim == 6, ErrorKind::Config,
            "pose_dim is fixed at 6 (3 rotation angles + 3 translation components)");
    require(dyn_dim >= 1, ErrorKind::Config, "dyn_dim must be positive");
    require(!lip_channels.empty(), ErrorKind::Config, "at least one lip channel is required");
    for (int64_t c : lip_channels)
        require(c >= 0 && c < dyn_dim, ErrorKind::Config,
                "lip channel " + std::to_string(c) + " outside [0, " + std::to_string(dyn_dim) + ")");
    require(static_cast<int64_t>(lip_channels.size()) < dyn_dim, ErrorKind::Config,
            "some dyn channels must remain non-lip");
    require(emotion_dim >= 1, ErrorKind::Config, "emotion_dim must be positive");
    require(lag >= 0, ErrorKind::Config, "lag must be non-negative");
    require(noise_level >= 0.0, ErrorKind::Config, "noise_level must be non-negative");
}

WorldMaps world_maps(const WorldConfig& cfg) {
    cfg.validate();
    Rng root(cfg.seed);
    Rng map_rng = root.fork(0);
    Rng lip_rng = root.fork(1);
    Rng mix_rng = root.fork(2);
    Rng emo_rng = root.fork(3);

    WorldMaps maps;
    maps.audio_map = Tensor::randn({cfg.audio_feat_dim, 2}, map_rng);

    // Left inverse via the 2x2 normal equations: pinv = (M^T M)^-1 M^T.
    const Tensor& m = maps.audio_map;
    double a = 0.0, b = 0.0, c = 0.0;  // [a b; b c] = M^T M
    for (int64_t i = 0; i < cfg.audio_feat_dim; ++i) {
        a += m.at(i, 0) * m.at(i, 0);
        b += m.at(i, 0) * m.at(i, 1);
        c += m.at(i, 1) * m.at(i, 1);
    }
    const double det = a * c - b * b;
    require(std::abs(det) > 1e-9, ErrorKind::Numeric, "degenerate audio map; change the world seed");
    maps.audio_pinv = Tensor({2, cfg.audio_feat_dim});
    for (int64_t i = 0; i < cfg.audio_feat_dim; ++i) {
        maps.audio_pinv.at(0, i) = (c * m.at(i, 0) - b * m.at(i, 1)) / det;
        maps.audio_pinv.at(1, i) = (a * m.at(i, 1) - b * m.at(i, 0)) / det;
    }

    const int64_t n_lip = static_cast<int64_t>(cfg.lip_channels.size());
    maps.lip_scale = Tensor::uniform({n_lip}, lip_rng, 0.8, 1.6);

    maps.pose_mix = Tensor({3});
    for (int64_t j = 0; j < 3; ++j) {
        const double mag = mix_rng.uniform(0.7, 1.3);
        maps.pose_mix[j] = mix_rng.bernoulli(0.5) ? mag : -mag;
    }

    maps.emotion_map = Tensor::randn({cfg.dyn_dim - n_lip, cfg.emotion_dim}, emo_rng, kEmotionGain);
    return maps;
}

WorldSample generate_sample(const WorldConfig& cfg, int64_t length, double g_theta, double g_phi,
                            double d, const Tensor& e, Rng& rng) {
    cfg.validate();
    require(length >= 1, ErrorKind::Contract, "generate_sample needs length >= 1");
    require(e.empty() || e.size() == cfg.emotion_dim, ErrorKind::Dimension,
            "emotion vector has " + std::to_string(e.size()) + " entries, expected " +
                std::to_string(cfg.emotion_dim));

    const WorldMaps maps = world_maps(cfg);
    const int64_t n_lip = static_cast<int64_t>(cfg.lip_channels.size());
    const int64_t n_dyn_rest = cfg.dyn_dim - n_lip;

    std::vector<bool> is_lip(static_cast<size_t>(cfg.dyn_dim), false);
    for (int64_t c : cfg.lip_channels) is_lip[static_cast<size_t>(c)] = true;

    // Per-process streams so draw counts never interact across channels.
    Rng content_rng = rng.fork(0);
    Rng prosody_rng = rng.fork(1);
    Rng audio_rng = rng.fork(2);
    Rng pose_rng = rng.fork(3);
    Rng trans_rng = rng.fork(4);
    Rng dyn_rng = rng.fork(5);
    Rng lip_noise_rng = rng.fork(6);

    // Emotion offsets for the non-lip dyn channels.
    Tensor dyn_offset({std::max<int64_t>(n_dyn_rest, 1)});
    if (!e.empty()) {
        for (int64_t i = 0; i < n_dyn_rest; ++i) {
            double acc = 0.0;
            for (int64_t j = 0; j < cfg.emotion_dim; ++j) acc += maps.emotion_map.at(i, j) * e[j];
            dyn_offset[i] = acc;
        }
    }

    WorldSample out;
    out.g_theta = g_theta;
    out.g_phi = g_phi;
    out.d = d;
    out.e = e.empty() ? Tensor({cfg.emotion_dim}) : e;
    out.audio = Tensor({length, cfg.audio_feat_dim});
    out.motion = Tensor({length, cfg.motion_dim()});
    out.content = Tensor({length});
    out.prosody = Tensor({length});

    // State, initialized from the stationary laws and settled by burn-in.
    double content = content_rng.normal();
    std::vector<double> prosody_hist;  // rolling, prosody_hist.back() is current
    prosody_hist.push_back(prosody_rng.normal());
    double pose_state[3] = {0.0, 0.0, 0.0};
    double trans_state[3] = {0.0, 0.0, 0.0};
    std::vector<double> dyn_state(static_cast<size_t>(std::max<int64_t>(n_dyn_rest, 1)), 0.0);
    for (int64_t i = 0; i < 3; ++i) trans_state[i] = kTransStd * trans_rng.normal();
    for (int64_t i = 0; i < n_dyn_rest; ++i) dyn_state[static_cast<size_t>(i)] = kDynStd * dyn_rng.normal();

    const double content_innov = ar1_innovation_std(kContentRho, 1.0);
    const double prosody_innov = ar1_innovation_std(kProsodyRho, 1.0);
    const double trans_innov = ar1_innovation_std(kTransRho, kTransStd);
    const double dyn_innov = ar1_innovation_std(kDynRho, kDynStd);
    const double pose_noise = cfg.noise_level * kPoseNoiseScale;

    const double g_off[3] = {g_theta, g_phi, 0.0};

    for (int64_t t = -kBurnIn; t < length; ++t) {
        content = kContentRho * content + content_innov * content_rng.normal();
        prosody_hist.push_back(kProsodyRho * prosody_hist.back() + prosody_innov * prosody_rng.normal());
        if (static_cast<int64_t>(prosody_hist.size()) > cfg.lag + 2)
            prosody_hist.erase(prosody_hist.begin());
        const double prosody = prosody_hist.back();
        const double prosody_lagged =
            prosody_hist[prosody_hist.size() - 1 - static_cast<size_t>(
                std::min<int64_t>(cfg.lag, static_cast<int64_t>(prosody_hist.size()) - 1))];

        for (int64_t j = 0; j < 3; ++j)
            pose_state[j] = kPoseLeak * pose_state[j] + kPoseDrive * maps.pose_mix[j] * prosody_lagged +
                            pose_noise * pose_rng.normal();
        for (int64_t j = 0; j < 3; ++j)
            trans_state[j] = kTransRho * trans_state[j] + trans_innov * trans_rng.normal();
        for (int64_t j = 0; j < n_dyn_rest; ++j)
            dyn_state[static_cast<size_t>(j)] =
                kDynRho * dyn_state[static_cast<size_t>(j)] + dyn_innov * dyn_rng.normal();

        // Audio and lip noise draws must happen every step (burn-in included)
        // so emitted frames do not depend on kBurnIn's parity with length.
        std::vector<double> audio_noise(static_cast<size_t>(cfg.audio_feat_dim));
        for (double& v : audio_noise) v = cfg.noise_level * audio_rng.normal();
        std::vector<double> lip_noise(static_cast<size_t>(n_lip));
        for (double& v : lip_noise) v = cfg.noise_level * lip_noise_rng.normal();

        if (t < 0) continue;

        out.content[t] = content;
        out.prosody[t] = prosody;

        for (int64_t i = 0; i < cfg.audio_feat_dim; ++i)
            out.audio.at(t, i) = maps.audio_map.at(i, 0) * content + maps.audio_map.at(i, 1) * prosody +
                                 audio_noise[static_cast<size_t>(i)];

        double* frame = out.motion.data() + t * cfg.motion_dim();
        for (int64_t j = 0; j < 3; ++j) frame[j] = g_off[j] + pose_state[j];
        frame[3] = d + trans_state[0];
        frame[4] = trans_state[1];
        frame[5] = trans_state[2];

        int64_t lip_i = 0, rest_i = 0;
        for (int64_t j = 0; j < cfg.dyn_dim; ++j) {
            if (is_lip[static_cast<size_t>(j)]) {
                frame[cfg.pose_dim + j] =
                    std::tanh(maps.lip_scale[lip_i] * content) + lip_noise[static_cast<size_t>(lip_i)];
                ++lip_i;
            } else {
                frame[cfg.pose_dim + j] = dyn_offset[rest_i] + dyn_state[static_cast<size_t>(rest_i)];
                ++rest_i;
            }
        }
    }
    check_finite(out.motion, "generate_sample");
    return out;
}

Tensor recover_content(const Tensor& audio, const WorldConfig& cfg) {
    require(audio.rank() == 2 && audio.cols() == cfg.audio_feat_dim, ErrorKind::Dimension,
            "audio shape " + audio.shape_str() + " does not match audio_feat_dim " +
                std::to_string(cfg.audio_feat_dim));
    const WorldMaps maps = world_maps(cfg);
    const int64_t n = audio.rows();
    Tensor content({n});
    for (int64_t t = 0; t < n; ++t) {
        double acc = 0.0;
        for (int64_t i = 0; i < cfg.audio_feat_dim; ++i) acc += maps.audio_pinv.at(0, i) * audio.at(t, i);
        content[t] = acc;
    }
    return content;
}

double oracle_alignment(const Tensor& motion, const Tensor& audio, const WorldConfig& cfg) {
    require(motion.rank() == 2 && audio.rank() == 2 && motion.rows() == audio.rows(),
            ErrorKind::Dimension, "motion and audio must have equal frame counts");
    require(motion.cols() == cfg.motion_dim(), ErrorKind::Dimension,
            "motion shape " + motion.shape_str() + " does not match config dims");
    require(motion.rows() >= 8, ErrorKind::Contract,
            "oracle_alignment needs at least 8 frames, got " + std::to_string(motion.rows()));

    const WorldMaps maps = world_maps(cfg);
    const Tensor content = recover_content(audio, cfg);
    const int64_t n = motion.rows();

    double total = 0.0;
    for (size_t li = 0; li < cfg.lip_channels.size(); ++li) {
        const int64_t ch = cfg.pose_dim + cfg.lip_channels[li];
        Tensor observed({n}), expected({n});
        for (int64_t t = 0; t < n; ++t) {
            observed[t] = motion.at(t, ch);
            expected[t] = std::tanh(maps.lip_scale[static_cast<int64_t>(li)] * content[t]);
        }
        total += pearson(observed, expected);
    }
    return total / static_cast<double>(cfg.lip_channels.size());
}

}  // namespace motiondiff
