#include "motiondiff/capp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <memory>

#include "motiondiff/error.hpp"

namespace motiondiff {

void CappConfig::validate() const {
    require(audio_feat_dim >= 1, ErrorKind::Config, "audio_feat_dim must be positive");
    require(pose_dim >= 1, ErrorKind::Config, "pose_dim must be positive");
    require(window_len >= 2, ErrorKind::Config, "window_len must be at least 2");
    require(embed_dim >= 2 && embed_dim % 2 == 0, ErrorKind::Config, "embed_dim must be even");
    require(heads >= 1 && embed_dim % heads == 0, ErrorKind::Config,
            "heads must divide embed_dim");
    require(layers >= 1, ErrorKind::Config, "layers must be positive");
}

CappModel::CappModel(const CappConfig& cfg, Rng& rng)
    : cfg_((cfg.validate(), cfg)),
      proj_audio_("capp.proj_audio", cfg.audio_feat_dim, cfg.embed_dim, rng),
      proj_pose_("capp.proj_pose", cfg.pose_dim, cfg.embed_dim, rng),
      audio_enc_("capp.audio_enc", cfg.embed_dim, cfg.heads, cfg.layers, rng),
      pose_enc_("capp.pose_enc", cfg.embed_dim, cfg.heads, cfg.layers, rng),
      head_audio_("capp.head_audio", cfg.embed_dim, cfg.embed_dim, rng),
      head_pose_("capp.head_pose", cfg.embed_dim, cfg.embed_dim, rng),
      log_temp_("capp.log_temp", Tensor::scalar(std::log(0.1))),
      pe_table_(sinusoidal_table(cfg.window_len, cfg.embed_dim)) {}

Var CappModel::embed(const Linear& proj, const TransformerEncoder& enc, const Linear& head,
                     const Tensor& windows, int64_t count, int64_t feat_dim) const {
    require(count >= 1, ErrorKind::Contract, "need at least one window");
    require(windows.rank() == 2 && windows.rows() == count * cfg_.window_len &&
                windows.cols() == feat_dim,
            ErrorKind::Dimension,
            "windows must be [count*" + std::to_string(cfg_.window_len) + " x " +
                std::to_string(feat_dim) + "], got " + shape_to_string(windows.shape()));
    Tensor pe({count * cfg_.window_len, cfg_.embed_dim});
    for (int64_t b = 0; b < count; ++b) {
        std::copy(pe_table_.data(), pe_table_.data() + pe_table_.size(),
                  pe.data() + b * pe_table_.size());
    }
    Var tokens = add(proj.forward(Var::constant(windows)), Var::constant(pe));
    Var pooled = mean_pool_rows(enc.forward(tokens, count), count);
    return l2_normalize_rows(head.forward(pooled));
}

Var CappModel::embed_audio(const Tensor& windows, int64_t count) {
    return embed(proj_audio_, audio_enc_, head_audio_, windows, count, cfg_.audio_feat_dim);
}

Var CappModel::embed_pose(const Tensor& windows, int64_t count) {
    return embed(proj_pose_, pose_enc_, head_pose_, windows, count, cfg_.pose_dim);
}

double CappModel::temperature() const { return std::exp(log_temp_.value().item()); }

void CappModel::params(ParameterList& out) {
    proj_audio_.params(out);
    proj_pose_.params(out);
    audio_enc_.params(out);
    pose_enc_.params(out);
    head_audio_.params(out);
    head_pose_.params(out);
    out.push_back(&log_temp_);
}

namespace {

// Symmetric cross-entropy over the logit matrix with diagonal positives.
// d logits = ((P_row - I) + (P_col - I)) / (2B) with P_row row-stochastic
// and P_col column-stochastic.
Var symmetric_infonce(const Var& logits) {
    const Tensor& z = logits.value();
    require(z.rank() == 2 && z.rows() == z.cols(), ErrorKind::Dimension,
            "logit matrix must be square");
    const int64_t b = z.rows();
    require(b >= 2, ErrorKind::Contract, "contrastive loss needs at least two pairs");

    Tensor p_row = softmax_rows(z);
    Tensor zt = transpose(z);
    Tensor p_col = transpose(softmax_rows(zt));
    double acc = 0.0;
    for (int64_t i = 0; i < b; ++i) {
        acc -= std::log(p_row.at(i, i)) + std::log(p_col.at(i, i));
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(2 * b));
    check_finite(out, "symmetric_infonce");

    auto rows = std::make_shared<Tensor>(std::move(p_row));
    auto cols = std::make_shared<Tensor>(std::move(p_col));
    auto fn = [rows, cols, b](const Tensor& g, const Tensor&, std::span<Var> ps) {
        if (!ps[0].requires_grad()) return;
        Tensor& dz = grad_buffer(ps[0]);
        const double s = g.item() / static_cast<double>(2 * b);
        for (int64_t i = 0; i < b; ++i) {
            for (int64_t j = 0; j < b; ++j) {
                double v = rows->at(i, j) + cols->at(i, j);
                if (i == j) v -= 2.0;
                dz.at(i, j) += s * v;
            }
        }
    };
    return Var::make(std::move(out), {logits}, std::move(fn));
}

}  // namespace

Var contrastive_loss(CappModel& model, const Tensor& audio_windows, const Tensor& pose_windows,
                     int64_t count) {
    require(count >= 2, ErrorKind::Contract, "contrastive loss needs at least two pairs");
    Var za = model.embed_audio(audio_windows, count);
    Var zp = model.embed_pose(pose_windows, count);
    Var sims = matmul(za, zp, false, true);
    // divide by the temperature: multiply by exp(-log_temp)
    Var logits = scale_by(sims, exp_scalar(scale(model.log_temp_var(), -1.0)));
    return symmetric_infonce(logits);
}

double capp_score(CappModel& model, const Tensor& audio_windows, const Tensor& pose_windows,
                  int64_t count) {
    require(count >= 1, ErrorKind::Contract, "capp_score needs at least one window");
    NoGradGuard guard;
    const Tensor za = model.embed_audio(audio_windows, count).value();
    const Tensor zp = model.embed_pose(pose_windows, count).value();
    double acc = 0.0;
    for (int64_t i = 0; i < count; ++i) {
        for (int64_t j = 0; j < za.cols(); ++j) acc += za.at(i, j) * zp.at(i, j);
    }
    return acc / static_cast<double>(count);
}

int64_t cut_windows(const CappConfig& cfg, const std::vector<PairedSequence>& seqs, int64_t shift,
                    Tensor& audio_out, Tensor& pose_out) {
    const int64_t w = cfg.window_len;
    require(std::llabs(shift) < w, ErrorKind::Contract,
            "shift " + std::to_string(shift) + " must stay below the window length " +
                std::to_string(w));
    std::vector<std::pair<const PairedSequence*, int64_t>> starts;
    for (const PairedSequence& s : seqs) {
        require(s.audio.rank() == 2 && s.pose.rank() == 2 && s.audio.rows() == s.pose.rows(),
                ErrorKind::Dimension, "paired tracks must have equal frame counts");
        require(s.audio.cols() == cfg.audio_feat_dim && s.pose.cols() == cfg.pose_dim,
                ErrorKind::Dimension, "paired tracks must match the configured dims");
        const int64_t n = s.audio.rows();
        for (int64_t i = std::max<int64_t>(0, -shift); i + w <= n && i + shift + w <= n;
             i += w) {
            if (i + shift < 0) continue;
            starts.emplace_back(&s, i);
        }
    }
    const int64_t count = static_cast<int64_t>(starts.size());
    audio_out = Tensor({count * w, cfg.audio_feat_dim});
    pose_out = Tensor({count * w, cfg.pose_dim});
    for (int64_t k = 0; k < count; ++k) {
        const auto& [s, i] = starts[static_cast<size_t>(k)];
        std::copy(s->audio.data() + i * cfg.audio_feat_dim,
                  s->audio.data() + (i + w) * cfg.audio_feat_dim,
                  audio_out.data() + k * w * cfg.audio_feat_dim);
        std::copy(s->pose.data() + (i + shift) * cfg.pose_dim,
                  s->pose.data() + (i + shift + w) * cfg.pose_dim,
                  pose_out.data() + k * w * cfg.pose_dim);
    }
    return count;
}

std::vector<double> shift_sensitivity(CappModel& model, const std::vector<PairedSequence>& seqs,
                                      int64_t max_shift) {
    require(max_shift >= 0, ErrorKind::Contract, "max_shift must be non-negative");
    std::vector<double> scores;
    scores.reserve(static_cast<size_t>(max_shift) + 1);
    for (int64_t s = 0; s <= max_shift; ++s) {
        Tensor audio, pose;
        int64_t count = cut_windows(model.config(), seqs, s, audio, pose);
        require(count >= 1, ErrorKind::Contract,
                "no full windows available at shift " + std::to_string(s));
        double score = capp_score(model, audio, pose, count);
        if (s > 0) {
            count = cut_windows(model.config(), seqs, -s, audio, pose);
            require(count >= 1, ErrorKind::Contract,
                    "no full windows available at shift " + std::to_string(-s));
            score = 0.5 * (score + capp_score(model, audio, pose, count));
        }
        scores.push_back(score);
    }
    return scores;
}

Tensor rescale_pose_variation(const Tensor& pose, double factor) {
    require(factor > 0.0, ErrorKind::Contract, "scale factor must be positive");
    require(pose.rank() == 2 && pose.rows() >= 1, ErrorKind::Dimension,
            "pose track must be a non-empty matrix");
    Tensor out(pose.shape());
    const int64_t c = pose.cols();
    std::copy(pose.data(), pose.data() + c, out.data());
    for (int64_t t = 1; t < pose.rows(); ++t) {
        for (int64_t j = 0; j < c; ++j) {
            out.at(t, j) = out.at(t - 1, j) + factor * (pose.at(t, j) - pose.at(t - 1, j));
        }
    }
    return out;
}

std::vector<double> scale_sensitivity(CappModel& model, const std::vector<PairedSequence>& seqs,
                                      const std::vector<double>& factors) {
    std::vector<double> scores;
    scores.reserve(factors.size());
    for (double f : factors) {
        require(f > 0.0, ErrorKind::Contract, "scale factor must be positive");
        std::vector<PairedSequence> scaled;
        const std::vector<PairedSequence>* use = &seqs;
        if (f != 1.0) {
            scaled.reserve(seqs.size());
            for (const PairedSequence& s : seqs) {
                scaled.push_back({s.audio, rescale_pose_variation(s.pose, f)});
            }
            use = &scaled;
        }
        Tensor audio, pose;
        const int64_t count = cut_windows(model.config(), *use, 0, audio, pose);
        require(count >= 1, ErrorKind::Contract, "no full windows available");
        scores.push_back(capp_score(model, audio, pose, count));
    }
    return scores;
}

}  // namespace motiondiff
