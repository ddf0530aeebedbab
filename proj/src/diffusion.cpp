#include "motiondiff/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "motiondiff/error.hpp"

namespace motiondiff {

void ScheduleConfig::validate() const {
    require(total_steps >= 1, ErrorKind::Config, "total_steps must be positive");
    require(beta_start > 0.0 && beta_start < 1.0, ErrorKind::Config,
            "beta_start must lie in (0, 1)");
    require(beta_end >= beta_start && beta_end < 1.0, ErrorKind::Config,
            "beta_end must lie in [beta_start, 1)");
}

NoiseSchedule::NoiseSchedule(const ScheduleConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int64_t t_max = cfg.total_steps;
    beta_.resize(static_cast<size_t>(t_max));
    alpha_bar_.resize(static_cast<size_t>(t_max));
    double prod = 1.0;
    for (int64_t t = 1; t <= t_max; ++t) {
        const double frac = t_max == 1 ? 0.0
                                       : static_cast<double>(t - 1) / static_cast<double>(t_max - 1);
        const double b = cfg.beta_start + frac * (cfg.beta_end - cfg.beta_start);
        prod *= 1.0 - b;
        beta_[static_cast<size_t>(t - 1)] = b;
        alpha_bar_[static_cast<size_t>(t - 1)] = prod;
    }
}

double NoiseSchedule::beta(int64_t t) const {
    require(t >= 1 && t <= cfg_.total_steps, ErrorKind::Contract,
            "step " + std::to_string(t) + " outside [1, " + std::to_string(cfg_.total_steps) + "]");
    return beta_[static_cast<size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int64_t t) const {
    require(t >= 1 && t <= cfg_.total_steps, ErrorKind::Contract,
            "step " + std::to_string(t) + " outside [1, " + std::to_string(cfg_.total_steps) + "]");
    return alpha_bar_[static_cast<size_t>(t - 1)];
}

Tensor forward_sample(const NoiseSchedule& sched, const Tensor& x0, int64_t t, Rng& rng,
                      Tensor* noise_out) {
    Tensor noise = Tensor::randn(x0.shape(), rng);
    const double ab = sched.alpha_bar(t);
    const double a = std::sqrt(ab);
    const double s = std::sqrt(1.0 - ab);
    Tensor out = x0;
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a * out[i] + s * noise[i];
    if (noise_out) *noise_out = std::move(noise);
    return out;
}

Var training_loss_at(Denoiser& model, const NoiseSchedule& sched, const Tensor& x0,
                     const std::vector<ConditionBundle>& cond, const std::vector<int64_t>& t,
                     const Tensor& noise) {
    require(noise.same_shape(x0), ErrorKind::Dimension, "noise must match x0's shape");
    Tensor x_t = x0;
    const int64_t batch = static_cast<int64_t>(t.size());
    require(batch >= 1 && x0.rank() == 2 && x0.rows() % batch == 0, ErrorKind::Dimension,
            "x0 rows must split evenly across the batch");
    const int64_t w = x0.rows() / batch;
    for (int64_t b = 0; b < batch; ++b) {
        const double ab = sched.alpha_bar(t[static_cast<size_t>(b)]);
        const double sa = std::sqrt(ab);
        const double sn = std::sqrt(1.0 - ab);
        for (int64_t i = b * w * x0.cols(); i < (b + 1) * w * x0.cols(); ++i) {
            x_t[i] = sa * x0[i] + sn * noise[i];
        }
    }
    return mse_loss(model.forward(x_t, t, cond), x0);
}

Var training_loss(Denoiser& model, const NoiseSchedule& sched, const Tensor& x0,
                  const std::vector<ConditionBundle>& cond, Rng& rng) {
    std::vector<int64_t> t(cond.size());
    for (int64_t& ti : t) ti = rng.uniform_int(1, sched.total_steps());
    Tensor noise = Tensor::randn(x0.shape(), rng);
    return training_loss_at(model, sched, x0, cond, t, noise);
}

double CfgScales::scale(Condition c) const {
    switch (c) {
        case Condition::Audio: return lambda_audio;
        case Condition::Gaze: return lambda_gaze;
        case Condition::Distance: return lambda_distance;
        case Condition::Emotion: return lambda_emotion;
        case Condition::Prefix: return lambda_prefix;
    }
    return 0.0;
}

std::vector<Condition> active_guidance(const ConditionBundle& cond, const CfgScales& scales) {
    std::vector<Condition> active;
    for (Condition c : {Condition::Audio, Condition::Gaze, Condition::Distance,
                        Condition::Emotion, Condition::Prefix}) {
        if (cond.has(c) && scales.scale(c) != 0.0) active.push_back(c);
    }
    return active;
}

Tensor cfg_combine(const Tensor& full, const std::vector<std::pair<Condition, Tensor>>& dropped,
                   const CfgScales& scales) {
    Tensor out = full;
    for (const auto& [c, est] : dropped) {
        const double lambda = scales.scale(c);
        require(lambda != 0.0, ErrorKind::Contract,
                std::string("guidance term for ") + condition_name(c) + " has zero scale");
        require(est.same_shape(full), ErrorKind::Dimension,
                std::string("guidance term for ") + condition_name(c) + " has shape " +
                    est.shape_str() + ", full pass has " + full.shape_str());
        // out += lambda * (full - est)
        out.add_scaled(full, lambda);
        out.add_scaled(est, -lambda);
    }
    return out;
}

std::vector<int64_t> sampling_grid(int64_t total_steps, int64_t steps) {
    require(total_steps >= 1, ErrorKind::Contract, "total_steps must be positive");
    require(steps >= 1 && steps <= total_steps, ErrorKind::Contract,
            "steps must lie in [1, total_steps]");
    std::vector<int64_t> grid(static_cast<size_t>(steps));
    if (steps == 1) {
        grid[0] = total_steps;
        return grid;
    }
    // Exact integer spacing keeps the grid strictly decreasing with T first
    // and 1 last: t_i = 1 + floor((T-1) * (steps-1-i) / (steps-1)).
    for (int64_t i = 0; i < steps; ++i) {
        grid[static_cast<size_t>(i)] = 1 + (total_steps - 1) * (steps - 1 - i) / (steps - 1);
    }
    return grid;
}

Tensor sample_window(Denoiser& model, const NoiseSchedule& sched, const ConditionBundle& cond,
                     const SamplerConfig& sampler, Rng& rng) {
    const DenoiserConfig& mc = model.config();
    require(sched.total_steps() == mc.total_steps, ErrorKind::Config,
            "schedule and denoiser disagree on total_steps");
    const int64_t w = mc.window_len;
    const int64_t m = mc.motion_dim;
    const std::vector<int64_t> grid = sampling_grid(sched.total_steps(), sampler.steps);
    const std::vector<Condition> active = active_guidance(cond, sampler.scales);

    std::vector<ConditionBundle> bundles;
    bundles.reserve(active.size() + 1);
    bundles.push_back(cond);
    for (Condition c : active) bundles.push_back(cond.without(c));
    const int64_t fan = static_cast<int64_t>(bundles.size());

    Tensor x = Tensor::randn({w, m}, rng);
    NoGradGuard guard;
    for (size_t gi = 0; gi < grid.size(); ++gi) {
        const int64_t t = grid[gi];
        Tensor xb({fan * w, m});
        for (int64_t v = 0; v < fan; ++v) {
            std::copy(x.data(), x.data() + x.size(), xb.data() + v * x.size());
        }
        const Tensor out = model.forward(xb, std::vector<int64_t>(bundles.size(), t), bundles).value();
        Tensor full({w, m});
        std::copy(out.data(), out.data() + full.size(), full.data());
        std::vector<std::pair<Condition, Tensor>> dropped;
        dropped.reserve(active.size());
        for (size_t v = 0; v < active.size(); ++v) {
            Tensor est({w, m});
            std::copy(out.data() + (v + 1) * est.size(), out.data() + (v + 2) * est.size(),
                      est.data());
            dropped.emplace_back(active[v], std::move(est));
        }
        const Tensor x0_hat = cfg_combine(full, dropped, sampler.scales);
        x = ddim_step(sched, x, x0_hat, t, gi + 1 < grid.size() ? grid[gi + 1] : 0);
    }
    return x;
}

Tensor ddim_step(const NoiseSchedule& sched, const Tensor& x, const Tensor& x0_hat, int64_t t,
                 int64_t t_next) {
    require(x.shape() == x0_hat.shape(), ErrorKind::Dimension,
            "ddim_step needs matching shapes, got " + shape_to_string(x.shape()) + " and " +
                shape_to_string(x0_hat.shape()));
    require(t >= 1 && t <= sched.total_steps(), ErrorKind::Contract,
            "ddim_step t out of range");
    require(t_next >= 0 && t_next < t, ErrorKind::Contract, "ddim_step needs t_next < t");
    if (t_next == 0) {
        return x0_hat;
    }
    Tensor out = x;
    const double ab_t = sched.alpha_bar(t);
    const double ab_n = sched.alpha_bar(t_next);
    const double sa_t = std::sqrt(ab_t);
    const double sn_t = std::sqrt(1.0 - ab_t);
    const double sa_n = std::sqrt(ab_n);
    const double sn_n = std::sqrt(1.0 - ab_n);
    for (int64_t i = 0; i < out.size(); ++i) {
        const double eps_hat = (x[i] - sa_t * x0_hat[i]) / sn_t;
        out[i] = sa_n * x0_hat[i] + sn_n * eps_hat;
    }
    check_finite(out, "ddim_step");
    return out;
}

}  // namespace motiondiff
