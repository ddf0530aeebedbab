#include "motiondiff/denoiser.hpp"

#include <algorithm>
#include <utility>

#include "motiondiff/error.hpp"

namespace motiondiff {

void DenoiserConfig::validate() const {
    require(motion_dim >= 1, ErrorKind::Config, "motion_dim must be positive");
    require(audio_feat_dim >= 1, ErrorKind::Config, "audio_feat_dim must be positive");
    require(emotion_dim >= 1, ErrorKind::Config, "emotion_dim must be positive");
    require(window_len >= 1, ErrorKind::Config, "window_len must be positive");
    require(prefix_len >= 0 && prefix_len < window_len, ErrorKind::Config,
            "prefix_len must lie in [0, window_len)");
    require(embed_dim >= 2 && embed_dim % 2 == 0, ErrorKind::Config, "embed_dim must be even");
    require(heads >= 1 && embed_dim % heads == 0, ErrorKind::Config,
            "heads must divide embed_dim");
    require(layers >= 1, ErrorKind::Config, "layers must be positive");
    require(total_steps >= 1, ErrorKind::Config, "total_steps must be positive");
}

namespace {

Tensor tile_table_rows(const Tensor& table, int64_t row0, int64_t rows, int64_t copies) {
    Tensor out({copies * rows, table.cols()});
    const int64_t cols = table.cols();
    for (int64_t b = 0; b < copies; ++b) {
        std::copy(table.data() + row0 * cols, table.data() + (row0 + rows) * cols,
                  out.data() + b * rows * cols);
    }
    return out;
}

}  // namespace

Denoiser::Denoiser(const DenoiserConfig& cfg, Rng& rng)
    : cfg_((cfg.validate(), cfg)),
      proj_motion_("denoiser.proj_motion", cfg.motion_dim, cfg.embed_dim, rng),
      proj_audio_("denoiser.proj_audio", cfg.audio_feat_dim, cfg.embed_dim, rng),
      proj_gaze_("denoiser.proj_gaze", 2, cfg.embed_dim, rng),
      proj_distance_("denoiser.proj_distance", 1, cfg.embed_dim, rng),
      proj_emotion_("denoiser.proj_emotion", cfg.emotion_dim, cfg.embed_dim, rng),
      t_mlp1_("denoiser.t_mlp1", cfg.embed_dim, cfg.embed_dim, rng),
      t_mlp2_("denoiser.t_mlp2", cfg.embed_dim, cfg.embed_dim, rng),
      type_time_("denoiser.type_time", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      type_gaze_("denoiser.type_gaze", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      type_distance_("denoiser.type_distance", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      type_emotion_("denoiser.type_emotion", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      type_pre_motion_("denoiser.type_pre_motion", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      type_pre_audio_("denoiser.type_pre_audio", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      type_audio_("denoiser.type_audio", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      type_motion_("denoiser.type_motion", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      null_audio_("denoiser.null_audio", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      null_gaze_("denoiser.null_gaze", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      null_distance_("denoiser.null_distance", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      null_emotion_("denoiser.null_emotion", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      null_pre_motion_("denoiser.null_pre_motion", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      null_pre_audio_("denoiser.null_pre_audio", Tensor::randn({cfg.embed_dim}, rng, 0.02)),
      encoder_("denoiser.encoder", cfg.embed_dim, cfg.heads, cfg.layers, rng),
      head_("denoiser.head", cfg.embed_dim, cfg.motion_dim, rng),
      time_table_(sinusoidal_table(cfg.total_steps + 1, cfg.embed_dim)),
      pe_table_(sinusoidal_table(cfg.prefix_len + cfg.window_len, cfg.embed_dim)) {}

Var Denoiser::forward(const Tensor& x_t, const std::vector<int64_t>& t,
                      const std::vector<ConditionBundle>& cond) {
    const int64_t batch = static_cast<int64_t>(t.size());
    const int64_t w = cfg_.window_len;
    const int64_t k = cfg_.prefix_len;
    const int64_t d = cfg_.embed_dim;
    require(batch >= 1 && cond.size() == t.size(), ErrorKind::Dimension,
            "forward needs matching t and condition counts");
    require(x_t.rank() == 2 && x_t.rows() == batch * w && x_t.cols() == cfg_.motion_dim,
            ErrorKind::Dimension,
            "x_t must be [batch*" + std::to_string(w) + " x " + std::to_string(cfg_.motion_dim) +
                "], got " + shape_to_string(x_t.shape()));

    // Pack per-sample raw inputs; mask rows mark where null embeddings go.
    Tensor t_raw({batch, d});
    Tensor gaze_raw({batch, 2}), dist_raw({batch, 1}), emo_raw({batch, cfg_.emotion_dim});
    std::vector<uint8_t> gaze_mask(static_cast<size_t>(batch));
    std::vector<uint8_t> dist_mask(static_cast<size_t>(batch));
    std::vector<uint8_t> emo_mask(static_cast<size_t>(batch));
    Tensor audio_raw({batch * w, cfg_.audio_feat_dim});
    std::vector<uint8_t> audio_mask(static_cast<size_t>(batch * w));
    Tensor pre_m_raw, pre_a_raw;
    std::vector<uint8_t> pre_mask;
    if (k > 0) {
        pre_m_raw = Tensor({batch * k, cfg_.motion_dim});
        pre_a_raw = Tensor({batch * k, cfg_.audio_feat_dim});
        pre_mask.assign(static_cast<size_t>(batch * k), 0);
    }

    for (int64_t b = 0; b < batch; ++b) {
        require(t[static_cast<size_t>(b)] >= 1 && t[static_cast<size_t>(b)] <= cfg_.total_steps,
                ErrorKind::Contract,
                "step index " + std::to_string(t[static_cast<size_t>(b)]) + " outside [1, " +
                    std::to_string(cfg_.total_steps) + "]");
        const double* trow = time_table_.data() + t[static_cast<size_t>(b)] * d;
        std::copy(trow, trow + d, t_raw.data() + b * d);

        const ConditionBundle& c = cond[static_cast<size_t>(b)];
        gaze_mask[static_cast<size_t>(b)] = !c.has_gaze;
        if (c.has_gaze) {
            gaze_raw.at(b, 0) = c.g_theta;
            gaze_raw.at(b, 1) = c.g_phi;
        }
        dist_mask[static_cast<size_t>(b)] = !c.has_distance;
        if (c.has_distance) dist_raw.at(b, 0) = c.distance;
        emo_mask[static_cast<size_t>(b)] = !c.has_emotion;
        if (c.has_emotion) {
            require(c.emotion.size() == cfg_.emotion_dim, ErrorKind::Dimension,
                    "emotion vector must have " + std::to_string(cfg_.emotion_dim) + " entries");
            std::copy(c.emotion.data(), c.emotion.data() + cfg_.emotion_dim,
                      emo_raw.data() + b * cfg_.emotion_dim);
        }
        if (c.has_audio) {
            require(c.audio.rank() == 2 && c.audio.rows() == w &&
                        c.audio.cols() == cfg_.audio_feat_dim,
                    ErrorKind::Dimension, "audio must be [" + std::to_string(w) + " x " +
                                              std::to_string(cfg_.audio_feat_dim) + "], got " +
                                              shape_to_string(c.audio.shape()));
            require(c.audio_valid >= 1 && c.audio_valid <= w, ErrorKind::Contract,
                    "audio_valid must lie in [1, window_len]");
        }
        for (int64_t f = 0; f < w; ++f) {
            const bool real = c.has_audio && f < c.audio_valid;
            audio_mask[static_cast<size_t>(b * w + f)] = !real;
            if (real) {
                std::copy(c.audio.data() + f * cfg_.audio_feat_dim,
                          c.audio.data() + (f + 1) * cfg_.audio_feat_dim,
                          audio_raw.data() + (b * w + f) * cfg_.audio_feat_dim);
            }
        }
        if (k > 0) {
            if (c.has_prefix) {
                require(c.motion_pre.rank() == 2 && c.motion_pre.rows() == k &&
                            c.motion_pre.cols() == cfg_.motion_dim,
                        ErrorKind::Dimension,
                        "motion_pre must be [" + std::to_string(k) + " x " +
                            std::to_string(cfg_.motion_dim) + "]");
                require(c.audio_pre.rank() == 2 && c.audio_pre.rows() == k &&
                            c.audio_pre.cols() == cfg_.audio_feat_dim,
                        ErrorKind::Dimension,
                        "audio_pre must be [" + std::to_string(k) + " x " +
                            std::to_string(cfg_.audio_feat_dim) + "]");
                std::copy(c.motion_pre.data(), c.motion_pre.data() + k * cfg_.motion_dim,
                          pre_m_raw.data() + b * k * cfg_.motion_dim);
                std::copy(c.audio_pre.data(), c.audio_pre.data() + k * cfg_.audio_feat_dim,
                          pre_a_raw.data() + b * k * cfg_.audio_feat_dim);
            } else {
                std::fill(pre_mask.begin() + b * k, pre_mask.begin() + (b + 1) * k, 1);
            }
        } else {
            require(!c.has_prefix, ErrorKind::Contract,
                    "prefix conditions require prefix_len > 0");
        }
    }

    // Null substitution happens on the projected stream; type and position
    // embeddings are then added uniformly, null rows included.
    const Var pe_window = Var::constant(tile_table_rows(pe_table_, k, w, batch));
    Var motion_tok = add(add_rowvec(proj_motion_.forward(Var::constant(x_t)), type_motion_.var()),
                         pe_window);
    Var audio_tok = replace_rows_with(proj_audio_.forward(Var::constant(audio_raw)),
                                      null_audio_.var(), audio_mask);
    audio_tok = add(add_rowvec(audio_tok, type_audio_.var()), pe_window);
    Var gaze_tok = add_rowvec(replace_rows_with(proj_gaze_.forward(Var::constant(gaze_raw)),
                                                null_gaze_.var(), gaze_mask),
                              type_gaze_.var());
    Var dist_tok = add_rowvec(replace_rows_with(proj_distance_.forward(Var::constant(dist_raw)),
                                                null_distance_.var(), dist_mask),
                              type_distance_.var());
    Var emo_tok = add_rowvec(replace_rows_with(proj_emotion_.forward(Var::constant(emo_raw)),
                                               null_emotion_.var(), emo_mask),
                             type_emotion_.var());
    Var t_tok = add_rowvec(
        t_mlp2_.forward(gelu(t_mlp1_.forward(Var::constant(t_raw)))), type_time_.var());

    Var pre_m_tok, pre_a_tok;
    if (k > 0) {
        const Var pe_prefix = Var::constant(tile_table_rows(pe_table_, 0, k, batch));
        pre_m_tok = replace_rows_with(proj_motion_.forward(Var::constant(pre_m_raw)),
                                      null_pre_motion_.var(), pre_mask);
        pre_m_tok = add(add_rowvec(pre_m_tok, type_pre_motion_.var()), pe_prefix);
        pre_a_tok = replace_rows_with(proj_audio_.forward(Var::constant(pre_a_raw)),
                                      null_pre_audio_.var(), pre_mask);
        pre_a_tok = add(add_rowvec(pre_a_tok, type_pre_audio_.var()), pe_prefix);
    }

    std::vector<Var> pieces;
    pieces.reserve(static_cast<size_t>(batch) * 8);
    for (int64_t b = 0; b < batch; ++b) {
        pieces.push_back(slice_rows(t_tok, b, b + 1));
        pieces.push_back(slice_rows(gaze_tok, b, b + 1));
        pieces.push_back(slice_rows(dist_tok, b, b + 1));
        pieces.push_back(slice_rows(emo_tok, b, b + 1));
        if (k > 0) {
            pieces.push_back(slice_rows(pre_m_tok, b * k, (b + 1) * k));
            pieces.push_back(slice_rows(pre_a_tok, b * k, (b + 1) * k));
        }
        pieces.push_back(slice_rows(audio_tok, b * w, (b + 1) * w));
        pieces.push_back(slice_rows(motion_tok, b * w, (b + 1) * w));
    }
    Var tokens = concat_rows(pieces);
    Var encoded = encoder_.forward(tokens, batch);

    const int64_t per = cfg_.tokens_per_sample();
    std::vector<Var> outs;
    outs.reserve(static_cast<size_t>(batch));
    for (int64_t b = 0; b < batch; ++b) {
        outs.push_back(slice_rows(encoded, b * per + (per - w), (b + 1) * per));
    }
    calls_ += batch;
    return head_.forward(concat_rows(outs));
}

Tensor Denoiser::denoise(const Tensor& x_t, int64_t t, const ConditionBundle& cond) {
    NoGradGuard guard;
    return forward(x_t, {t}, {cond}).value();
}

void Denoiser::params(ParameterList& out) {
    proj_motion_.params(out);
    proj_audio_.params(out);
    proj_gaze_.params(out);
    proj_distance_.params(out);
    proj_emotion_.params(out);
    t_mlp1_.params(out);
    t_mlp2_.params(out);
    for (Parameter* p : {&type_time_, &type_gaze_, &type_distance_, &type_emotion_,
                         &type_pre_motion_, &type_pre_audio_, &type_audio_, &type_motion_,
                         &null_audio_, &null_gaze_, &null_distance_, &null_emotion_,
                         &null_pre_motion_, &null_pre_audio_}) {
        out.push_back(p);
    }
    encoder_.params(out);
    head_.params(out);
}

int64_t Denoiser::parameter_count() const {
    const int64_t d = cfg_.embed_dim;
    int64_t total = (cfg_.motion_dim + 1) * d + (cfg_.audio_feat_dim + 1) * d + 3 * d + 2 * d +
                    (cfg_.emotion_dim + 1) * d;
    total += 2 * (d + 1) * d;  // timestep MLP
    total += 14 * d;           // 8 type + 6 null embeddings
    total += TransformerEncoder::parameter_count(d, cfg_.heads, cfg_.layers);
    total += (d + 1) * cfg_.motion_dim;  // head
    return total;
}

}  // namespace motiondiff
