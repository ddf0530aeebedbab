#pragma once

#include <cstdint>
#include <vector>

#include "motiondiff/nn.hpp"

namespace motiondiff {

struct CappConfig {
    int64_t audio_feat_dim = 16;
    int64_t pose_dim = 6;
    int64_t window_len = 24;  // frames per scored window
    int64_t embed_dim = 64;
    int64_t heads = 4;
    int64_t layers = 2;

    void validate() const;
    bool operator==(const CappConfig&) const = default;
};

// Dual-encoder contrastive scorer: an audio window and a pose window map to
// unit-norm embeddings whose cosine similarity is the alignment score.
// Positional encodings are added before the encoders, so the model can (and
// after training does) tell time-shifted pairs apart.
class CappModel {
public:
    CappModel(const CappConfig& cfg, Rng& rng);

    // windows pack `count` windows of window_len rows each; the result holds
    // one unit-norm row per window.
    Var embed_audio(const Tensor& windows, int64_t count);
    Var embed_pose(const Tensor& windows, int64_t count);

    double temperature() const;  // exp of the learned log, always positive
    Var log_temp_var() { return log_temp_.var(); }

    void params(ParameterList& out);
    const CappConfig& config() const { return cfg_; }

private:
    Var embed(const Linear& proj, const TransformerEncoder& enc, const Linear& head,
              const Tensor& windows, int64_t count, int64_t feat_dim) const;

    CappConfig cfg_;
    Linear proj_audio_, proj_pose_;
    TransformerEncoder audio_enc_, pose_enc_;
    Linear head_audio_, head_pose_;
    Parameter log_temp_;
    Tensor pe_table_;  // [window_len x embed_dim]
};

// Symmetric InfoNCE over the batch: cross-entropy of the row-wise and
// column-wise softmax of the cosine matrix divided by the temperature,
// diagonal entries being the positives. Needs at least two pairs.
Var contrastive_loss(CappModel& model, const Tensor& audio_windows, const Tensor& pose_windows,
                     int64_t count);

// Mean cosine similarity of paired windows; weights stay frozen.
double capp_score(CappModel& model, const Tensor& audio_windows, const Tensor& pose_windows,
                  int64_t count);

// A full (audio, pose) track pair; sensitivity studies cut aligned windows
// out of these.
struct PairedSequence {
    Tensor audio;  // [frames x audio_feat_dim]
    Tensor pose;   // [frames x pose_dim]
};

// Non-overlapping aligned windows with the pose track offset by `shift`
// frames (positive = pose lags audio). Returns the window count; the packed
// windows land in audio_out/pose_out.
int64_t cut_windows(const CappConfig& cfg, const std::vector<PairedSequence>& seqs, int64_t shift,
                    Tensor& audio_out, Tensor& pose_out);

// capp_score per shift in {0, 1, ..., max_shift}; the two directions of a
// nonzero shift are scored separately and averaged.
std::vector<double> shift_sensitivity(CappModel& model, const std::vector<PairedSequence>& seqs,
                                      int64_t max_shift);

// out[0] = pose[0]; out[t] = out[t-1] + factor * (pose[t] - pose[t-1]).
Tensor rescale_pose_variation(const Tensor& pose, double factor);

// capp_score per factor after rescaling inter-frame pose differences.
// factor 1.0 skips the transform entirely, so it scores the original data
// bit-for-bit.
std::vector<double> scale_sensitivity(CappModel& model, const std::vector<PairedSequence>& seqs,
                                      const std::vector<double>& factors);

}  // namespace motiondiff
