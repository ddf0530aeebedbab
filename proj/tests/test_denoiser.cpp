#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "grad_check.hpp"
#include "motiondiff/denoiser.hpp"
#include "motiondiff/error.hpp"

using namespace motiondiff;

namespace {

DenoiserConfig tiny_config() {
    DenoiserConfig cfg;
    cfg.motion_dim = 3;
    cfg.audio_feat_dim = 2;
    cfg.emotion_dim = 2;
    cfg.window_len = 2;
    cfg.prefix_len = 1;
    cfg.embed_dim = 8;
    cfg.heads = 2;
    cfg.layers = 1;
    cfg.total_steps = 10;
    return cfg;
}

ConditionBundle tiny_bundle(const DenoiserConfig& cfg, Rng& rng) {
    ConditionBundle c;
    c.has_audio = true;
    c.audio = Tensor::randn({cfg.window_len, cfg.audio_feat_dim}, rng);
    c.audio_valid = cfg.window_len;
    c.has_gaze = true;
    c.g_theta = 0.2;
    c.g_phi = -0.1;
    c.has_distance = true;
    c.distance = 1.1;
    c.has_emotion = true;
    c.emotion = Tensor::randn({cfg.emotion_dim}, rng);
    if (cfg.prefix_len > 0) {
        c.has_prefix = true;
        c.motion_pre = Tensor::randn({cfg.prefix_len, cfg.motion_dim}, rng);
        c.audio_pre = Tensor::randn({cfg.prefix_len, cfg.audio_feat_dim}, rng);
    }
    return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double worst = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

}  // namespace

TEST_CASE("config validation rejects inconsistent settings") {
    DenoiserConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.prefix_len = cfg.window_len;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = tiny_config();
    cfg.embed_dim = 7;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = tiny_config();
    cfg.heads = 3;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = tiny_config();
    cfg.total_steps = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("forward obeys the shape contract and is deterministic") {
    DenoiserConfig cfg = tiny_config();
    Rng rng(31);
    Denoiser model(cfg, rng);
    Rng data(32);
    ConditionBundle c = tiny_bundle(cfg, data);
    Tensor x = Tensor::randn({cfg.window_len, cfg.motion_dim}, data);

    Tensor out = model.denoise(x, 3, c);
    CHECK(out.rows() == cfg.window_len);
    CHECK(out.cols() == cfg.motion_dim);
    Tensor again = model.denoise(x, 3, c);
    CHECK(max_abs_diff(out, again) == 0.0);

    CHECK_THROWS_AS(model.denoise(Tensor({cfg.window_len, cfg.motion_dim + 1}), 3, c), Error);
    CHECK_THROWS_AS(model.denoise(x, 0, c), Error);
    CHECK_THROWS_AS(model.denoise(x, cfg.total_steps + 1, c), Error);
}

TEST_CASE("output responds to the step index and to dropped conditions") {
    DenoiserConfig cfg = tiny_config();
    Rng rng(33);
    Denoiser model(cfg, rng);
    Rng data(34);
    ConditionBundle c = tiny_bundle(cfg, data);
    Tensor x = Tensor::randn({cfg.window_len, cfg.motion_dim}, data);

    Tensor at_t1 = model.denoise(x, 1, c);
    Tensor at_tmax = model.denoise(x, cfg.total_steps, c);
    CHECK(max_abs_diff(at_t1, at_tmax) > 1e-8);

    Tensor with_all = model.denoise(x, 3, c);
    for (Condition cond : {Condition::Audio, Condition::Gaze, Condition::Distance,
                           Condition::Emotion, Condition::Prefix}) {
        Tensor dropped = model.denoise(x, 3, c.without(cond));
        CHECK(max_abs_diff(with_all, dropped) > 1e-8);
    }
}

TEST_CASE("audio frames past audio_valid are inert") {
    DenoiserConfig cfg = tiny_config();
    cfg.window_len = 4;
    Rng rng(35);
    Denoiser model(cfg, rng);
    Rng data(36);
    ConditionBundle c = tiny_bundle(cfg, data);
    c.audio_valid = 2;
    Tensor x = Tensor::randn({cfg.window_len, cfg.motion_dim}, data);
    Tensor base = model.denoise(x, 2, c);

    ConditionBundle tail_noise = c;
    for (int64_t f = c.audio_valid; f < cfg.window_len; ++f) {
        for (int64_t j = 0; j < cfg.audio_feat_dim; ++j) tail_noise.audio.at(f, j) += 37.0;
    }
    CHECK(max_abs_diff(base, model.denoise(x, 2, tail_noise)) == 0.0);

    ConditionBundle head_noise = c;
    head_noise.audio.at(0, 0) += 0.5;
    CHECK(max_abs_diff(base, model.denoise(x, 2, head_noise)) > 1e-8);
}

TEST_CASE("prefix-free config rejects prefix bundles and runs without them") {
    DenoiserConfig cfg = tiny_config();
    cfg.prefix_len = 0;
    Rng rng(37);
    Denoiser model(cfg, rng);
    Rng data(38);
    ConditionBundle c = tiny_bundle(cfg, data);
    CHECK_FALSE(c.has_prefix);
    Tensor x = Tensor::randn({cfg.window_len, cfg.motion_dim}, data);
    Tensor out = model.denoise(x, 1, c);
    CHECK(out.rows() == cfg.window_len);

    ConditionBundle withp = c;
    withp.has_prefix = true;
    withp.motion_pre = Tensor({1, cfg.motion_dim});
    withp.audio_pre = Tensor({1, cfg.audio_feat_dim});
    CHECK_THROWS_AS(model.denoise(x, 1, withp), Error);
}

TEST_CASE("batched forward matches per-sample forwards") {
    DenoiserConfig cfg = tiny_config();
    Rng rng(39);
    Denoiser model(cfg, rng);
    Rng data(40);
    ConditionBundle c1 = tiny_bundle(cfg, data);
    ConditionBundle c2 = tiny_bundle(cfg, data).without(Condition::Audio);
    Tensor x1 = Tensor::randn({cfg.window_len, cfg.motion_dim}, data);
    Tensor x2 = Tensor::randn({cfg.window_len, cfg.motion_dim}, data);

    Tensor xb({2 * cfg.window_len, cfg.motion_dim});
    std::copy(x1.data(), x1.data() + x1.size(), xb.data());
    std::copy(x2.data(), x2.data() + x2.size(), xb.data() + x1.size());

    NoGradGuard guard;
    Tensor batched = model.forward(xb, {2, 7}, {c1, c2}).value();
    Tensor s1 = model.denoise(x1, 2, c1);
    Tensor s2 = model.denoise(x2, 7, c2);
    for (int64_t f = 0; f < cfg.window_len; ++f) {
        for (int64_t j = 0; j < cfg.motion_dim; ++j) {
            CHECK(std::abs(batched.at(f, j) - s1.at(f, j)) < 1e-12);
            CHECK(std::abs(batched.at(cfg.window_len + f, j) - s2.at(f, j)) < 1e-12);
        }
    }
}

TEST_CASE("call counter bills per sample") {
    DenoiserConfig cfg = tiny_config();
    Rng rng(41);
    Denoiser model(cfg, rng);
    Rng data(42);
    ConditionBundle c = tiny_bundle(cfg, data);
    Tensor x = Tensor::randn({cfg.window_len, cfg.motion_dim}, data);
    Tensor xb({3 * cfg.window_len, cfg.motion_dim});

    CHECK(model.calls() == 0);
    (void)model.denoise(x, 1, c);
    CHECK(model.calls() == 1);
    NoGradGuard guard;
    (void)model.forward(xb, {1, 2, 3}, {c, c, c});
    CHECK(model.calls() == 4);
    model.reset_calls();
    CHECK(model.calls() == 0);
}

TEST_CASE("parameter count matches the closed form") {
    for (bool with_prefix : {true, false}) {
        DenoiserConfig cfg = tiny_config();
        if (!with_prefix) cfg.prefix_len = 0;
        Rng rng(43);
        Denoiser model(cfg, rng);
        ParameterList params;
        model.params(params);
        CHECK(parameter_count(params) == model.parameter_count());
    }
    DenoiserConfig desk;  // default desk-scale settings
    Rng rng(44);
    Denoiser model(desk, rng);
    ParameterList params;
    model.params(params);
    CHECK(parameter_count(params) == model.parameter_count());
}

TEST_CASE("denoiser gradients agree with finite differences") {
    DenoiserConfig cfg = tiny_config();
    Rng rng(45);
    Denoiser model(cfg, rng);
    Rng data(46);
    ConditionBundle full = tiny_bundle(cfg, data);
    ConditionBundle sparse = full.without(Condition::Audio).without(Condition::Prefix);
    Tensor x = Tensor::randn({2 * cfg.window_len, cfg.motion_dim}, data);
    Tensor target = Tensor::randn({2 * cfg.window_len, cfg.motion_dim}, data);

    ParameterList params;
    model.params(params);
    // Mixed bundle batch exercises both the data and the null-token paths.
    auto loss = [&]() {
        return mse_loss(model.forward(x, {1, cfg.total_steps}, {full, sparse}), target);
    };
    CHECK(motiondiff::testing::max_grad_error(loss, params) < 1e-6);
}

TEST_CASE("small perturbations of the input stay bounded") {
    DenoiserConfig cfg = tiny_config();
    Rng rng(47);
    Denoiser model(cfg, rng);
    Rng data(48);
    ConditionBundle c = tiny_bundle(cfg, data);
    Tensor x = Tensor::randn({cfg.window_len, cfg.motion_dim}, data);
    Tensor base = model.denoise(x, 5, c);
    const double eps = 1e-5;
    Tensor xp = x;
    for (int64_t i = 0; i < xp.size(); ++i) xp[i] += eps;
    // Smooth network: output shift stays within a modest multiple of eps.
    CHECK(max_abs_diff(base, model.denoise(xp, 5, c)) < 1e4 * eps);
}
