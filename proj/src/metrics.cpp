#include "motiondiff/metrics.hpp"

#include <cmath>
#include <sstream>

#include "motiondiff/conditioning.hpp"
#include "motiondiff/error.hpp"

namespace motiondiff {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Unit vector for yaw/pitch angles (radians): yaw turns about the vertical
// axis, pitch lifts toward it.
void direction(double yaw, double pitch, double out[3]) {
    out[0] = std::cos(pitch) * std::sin(yaw);
    out[1] = std::sin(pitch);
    out[2] = std::cos(pitch) * std::cos(yaw);
}

}  // namespace

double pose_variation_intensity(const Tensor& motion) {
    require(motion.rank() == 2 && motion.rows() >= 2, ErrorKind::Contract,
            "pose variation needs at least two frames");
    require(motion.cols() >= 3, ErrorKind::Dimension,
            "motion must carry the three rotation channels");
    double acc = 0.0;
    for (int64_t t = 1; t < motion.rows(); ++t) {
        double sq = 0.0;
        for (int64_t j = 0; j < 3; ++j) {
            const double d = motion.at(t, j) - motion.at(t - 1, j);
            sq += d * d;
        }
        acc += std::sqrt(sq);
    }
    return acc / static_cast<double>(motion.rows() - 1);
}

std::pair<double, double> control_adherence(const Tensor& motion, double g_theta, double g_phi,
                                            double d) {
    require(motion.rank() == 2 && motion.rows() >= 1 && motion.cols() >= 4, ErrorKind::Dimension,
            "motion must carry rotation and distance channels");
    double yaw = 0.0, pitch = 0.0, dist = 0.0;
    for (int64_t t = 0; t < motion.rows(); ++t) {
        yaw += motion.at(t, 0);
        pitch += motion.at(t, 1);
        dist += motion.at(t, 3);
    }
    const double n = static_cast<double>(motion.rows());
    yaw /= n;
    pitch /= n;
    dist /= n;

    double want[3], got[3];
    direction(g_theta, g_phi, want);
    direction(yaw, pitch, got);
    double cosang = want[0] * got[0] + want[1] * got[1] + want[2] * got[2];
    cosang = std::min(1.0, std::max(-1.0, cosang));
    const double gaze_deg = std::acos(cosang) * 180.0 / kPi;
    return {gaze_deg, std::abs(d - dist)};
}

double boundary_ratio(const std::vector<Tensor>& sequences, int64_t window_len) {
    require(window_len >= 1, ErrorKind::Contract, "window_len must be positive");
    double boundary_acc = 0.0, within_acc = 0.0;
    int64_t boundary_n = 0, within_n = 0;
    for (const Tensor& seq : sequences) {
        require(seq.rank() == 2 && seq.rows() >= 2, ErrorKind::Contract,
                "each sequence needs at least two frames");
        for (int64_t t = 1; t < seq.rows(); ++t) {
            double sq = 0.0;
            for (int64_t j = 0; j < seq.cols(); ++j) {
                const double d = seq.at(t, j) - seq.at(t - 1, j);
                sq += d * d;
            }
            const double jump = std::sqrt(sq);
            if (t % window_len == 0) {
                boundary_acc += jump;
                boundary_n++;
            } else {
                within_acc += jump;
                within_n++;
            }
        }
    }
    require(boundary_n >= 1, ErrorKind::Contract, "no window boundaries in the sequences");
    require(within_n >= 1, ErrorKind::Contract, "no within-window transitions in the sequences");
    const double within_mean = within_acc / static_cast<double>(within_n);
    require(within_mean > 0.0, ErrorKind::Numeric, "degenerate all-constant sequences");
    return (boundary_acc / static_cast<double>(boundary_n)) / within_mean;
}

MetricReport evaluate_model(Denoiser& model, const NoiseSchedule& sched, CappModel* capp,
                            const WorldConfig& world_cfg, const std::vector<WorldSample>& eval_set,
                            const SamplerConfig& sampler, Rng& rng) {
    require(!eval_set.empty(), ErrorKind::Contract, "evaluation set is empty");
    const int64_t pose_dim = world_cfg.pose_dim;
    MetricReport report;
    double dp_acc = 0.0;
    int64_t dp_pairs = 0;
    std::vector<Tensor> generated;
    std::vector<PairedSequence> pairs;
    generated.reserve(eval_set.size());
    for (size_t i = 0; i < eval_set.size(); ++i) {
        const WorldSample& s = eval_set[i];
        ConditionBundle cond = resolve_defaults(std::make_pair(s.g_theta, s.g_phi), s.d, s.e,
                                                s.d, world_cfg.emotion_dim);
        Rng gen_rng = rng.fork(static_cast<uint64_t>(i));
        Tensor gen = generate_long(model, sched, s.audio, cond, sampler, gen_rng);

        if (gen.rows() >= 2) {
            dp_acc += pose_variation_intensity(gen) * static_cast<double>(gen.rows() - 1);
            dp_pairs += gen.rows() - 1;
        }
        report.oracle_alignment += oracle_alignment(gen, s.audio, world_cfg);
        const auto [gaze_err, dist_err] = control_adherence(gen, s.g_theta, s.g_phi, s.d);
        report.gaze_error += gaze_err;
        report.distance_error += dist_err;

        if (capp) {
            Tensor pose({gen.rows(), pose_dim});
            for (int64_t t = 0; t < gen.rows(); ++t) {
                for (int64_t j = 0; j < pose_dim; ++j) pose.at(t, j) = gen.at(t, j);
            }
            pairs.push_back({s.audio, std::move(pose)});
        }
        generated.push_back(std::move(gen));
    }
    const double n = static_cast<double>(eval_set.size());
    report.oracle_alignment /= n;
    report.gaze_error /= n;
    report.distance_error /= n;
    report.delta_p = dp_pairs > 0 ? dp_acc / static_cast<double>(dp_pairs) : 0.0;

    if (capp) {
        Tensor audio_w, pose_w;
        const int64_t count = cut_windows(capp->config(), pairs, 0, audio_w, pose_w);
        report.capp = count >= 1 ? capp_score(*capp, audio_w, pose_w, count) : 0.0;
    }

    const int64_t w = model.config().window_len;
    std::vector<Tensor> spanning;
    for (Tensor& g : generated) {
        if (g.rows() > w) spanning.push_back(std::move(g));
    }
    report.boundary_ratio = spanning.empty() ? 0.0 : boundary_ratio(spanning, w);
    return report;
}

std::vector<SweepCell> ablation_sweep(Denoiser& model, const NoiseSchedule& sched, CappModel* capp,
                                      const WorldConfig& world_cfg,
                                      const std::vector<WorldSample>& eval_set,
                                      const std::vector<double>& lambda_a_grid,
                                      const std::vector<double>& lambda_g_grid,
                                      const std::vector<int64_t>& steps_grid, uint64_t seed) {
    std::vector<SweepCell> cells;
    cells.reserve(lambda_a_grid.size() * lambda_g_grid.size() * steps_grid.size());
    uint64_t index = 0;
    for (double la : lambda_a_grid) {
        for (double lg : lambda_g_grid) {
            for (int64_t steps : steps_grid) {
                SweepCell cell;
                cell.lambda_audio = la;
                cell.lambda_gaze = lg;
                cell.steps = steps;
                SamplerConfig sampler;
                sampler.steps = steps;
                sampler.scales.lambda_audio = la;
                sampler.scales.lambda_gaze = lg;
                // Fresh root per cell keeps cells order-independent.
                Rng cell_rng = Rng(seed).fork(index);
                cell.report = evaluate_model(model, sched, capp, world_cfg, eval_set, sampler,
                                             cell_rng);
                cells.push_back(cell);
                index++;
            }
        }
    }
    return cells;
}

std::string sweep_csv(const std::vector<SweepCell>& cells) {
    std::ostringstream out;
    out.precision(10);
    out << "lambda_audio,lambda_gaze,steps,delta_p,capp,oracle_alignment,gaze_error,"
           "distance_error,boundary_ratio\n";
    for (const SweepCell& c : cells) {
        out << c.lambda_audio << ',' << c.lambda_gaze << ',' << c.steps << ','
            << c.report.delta_p << ',' << c.report.capp << ',' << c.report.oracle_alignment << ','
            << c.report.gaze_error << ',' << c.report.distance_error << ','
            << c.report.boundary_ratio << '\n';
    }
    return out.str();
}

}  // namespace motiondiff
