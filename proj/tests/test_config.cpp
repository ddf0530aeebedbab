#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "motiondiff/config.hpp"
#include "motiondiff/error.hpp"
#include "motiondiff/rng.hpp"

using namespace motiondiff;

namespace {

RunConfig random_config(Rng& rng) {
    RunConfig c;
    c.world.seed = rng.next_u64();
    c.world.frame_rate = rng.uniform_int(10, 60);
    c.world.audio_feat_dim = rng.uniform_int(2, 20);
    c.world.pose_dim = 6;
    c.world.dyn_dim = rng.uniform_int(2, 20);
    c.world.lip_channels.clear();
    const int64_t lips = rng.uniform_int(1, c.world.dyn_dim);
    for (int64_t i = 0; i < lips; ++i) c.world.lip_channels.push_back(i);
    c.world.emotion_dim = rng.uniform_int(1, 10);
    c.world.lag = rng.uniform_int(0, 4);
    c.world.noise_level = rng.uniform(0.001, 0.2);

    c.denoiser.window_len = rng.uniform_int(4, 40);
    c.denoiser.prefix_len = rng.uniform_int(0, c.denoiser.window_len - 1);
    c.denoiser.heads = rng.uniform_int(1, 4);
    c.denoiser.embed_dim = c.denoiser.heads * 2 * rng.uniform_int(1, 16);
    c.denoiser.layers = rng.uniform_int(1, 4);

    c.schedule.total_steps = rng.uniform_int(2, 2000);
    c.schedule.beta_start = rng.uniform(1e-5, 1e-3);
    c.schedule.beta_end = rng.uniform(2e-3, 0.05);

    c.capp.window_len = rng.uniform_int(2, 30);
    c.capp.heads = rng.uniform_int(1, 4);
    c.capp.embed_dim = c.capp.heads * 2 * rng.uniform_int(1, 16);
    c.capp.layers = rng.uniform_int(1, 3);

    c.train.batch = rng.uniform_int(1, 64);
    c.train.iterations = rng.uniform_int(0, 100000);
    c.train.lr = std::exp(rng.uniform(-12.0, -2.0));
    c.train.seed = rng.next_u64();
    c.capp_train.batch = rng.uniform_int(2, 32);
    c.capp_train.iterations = rng.uniform_int(0, 100000);
    c.capp_train.lr = std::exp(rng.uniform(-12.0, -2.0));
    c.capp_train.seed = rng.next_u64();

    c.cfg_defaults.lambda_audio = rng.uniform(0.0, 3.0);
    c.cfg_defaults.lambda_gaze = rng.uniform(0.0, 3.0);
    c.cfg_defaults.lambda_distance = rng.uniform(0.0, 1.0);
    c.cfg_defaults.lambda_emotion = rng.uniform(0.0, 1.0);
    c.cfg_defaults.lambda_prefix = rng.uniform(0.0, 1.0);
    c.steps = rng.uniform_int(1, c.schedule.total_steps);
    c.paths.dataset = "d" + std::to_string(rng.uniform_int(0, 999));
    c.paths.checkpoint = "c" + std::to_string(rng.uniform_int(0, 999)) + ".ckpt";
    c.paths.capp_checkpoint = "p" + std::to_string(rng.uniform_int(0, 999)) + ".ckpt";
    c.paths.report = "r" + std::to_string(rng.uniform_int(0, 999)) + ".csv";

    c.link_dims();
    return c;
}

}  // namespace

TEST_CASE("empty config parses to the documented defaults and is runnable") {
    const RunConfig parsed = parse_config("{}");
    CHECK(parsed == RunConfig{});
    CHECK_NOTHROW(parsed.validate());
    CHECK(parsed.cfg_defaults.lambda_audio == 0.5);
    CHECK(parsed.cfg_defaults.lambda_gaze == 1.0);
    CHECK(parsed.steps == 50);
    CHECK(parsed.schedule.total_steps == 1000);
    CHECK(parsed.schedule.beta_start == 1e-4);
    CHECK(parsed.schedule.beta_end == 0.02);
}

TEST_CASE("defaults keep shared dimensions linked") {
    RunConfig c;
    CHECK(c.denoiser.motion_dim == c.world.motion_dim());
    CHECK(c.denoiser.audio_feat_dim == c.world.audio_feat_dim);
    CHECK(c.capp.pose_dim == c.world.pose_dim);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("round-trip parse(emit(c)) == c for randomized valid configs") {
    Rng rng(42);
    for (int trial = 0; trial < 60; ++trial) {
        const RunConfig c = random_config(rng);
        CAPTURE(trial);
        const RunConfig back = parse_config(emit_config(c));
        CHECK(back == c);
    }
}

TEST_CASE("partial config overrides one field and keeps the rest") {
    const RunConfig c = parse_config(R"({"denoiser": {"embed_dim": 128}})");
    CHECK(c.denoiser.embed_dim == 128);
    RunConfig expect;
    expect.denoiser.embed_dim = 128;
    CHECK(c == expect);
}

TEST_CASE("linked dimensions follow the world section") {
    const RunConfig c = parse_config(R"({"world": {"audio_feat_dim": 11, "dyn_dim": 7}})");
    CHECK(c.denoiser.audio_feat_dim == 11);
    CHECK(c.denoiser.motion_dim == 6 + 7);
    CHECK(c.capp.audio_feat_dim == 11);
}

TEST_CASE("unknown keys are rejected at any level") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"wrold": {}})"),
                         doctest::Contains("unknown config key"), Error);
    CHECK_THROWS_WITH_AS(parse_config(R"({"world": {"motion_dim": 9}})"),
                         doctest::Contains("world.motion_dim"), Error);
    CHECK_THROWS_WITH_AS(parse_config(R"({"denoiser": {"total_steps": 5}})"),
                         doctest::Contains("denoiser.total_steps"), Error);
}

TEST_CASE("type and syntax errors are config errors") {
    try {
        parse_config(R"({"steps": "fifty"})");
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
    try {
        parse_config("{nope");
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
}

TEST_CASE("validate rejects out-of-range settings") {
    RunConfig c;
    c.steps = c.schedule.total_steps + 1;
    CHECK_THROWS_AS(c.validate(), Error);

    c = RunConfig{};
    c.cfg_defaults.lambda_gaze = -0.5;
    CHECK_THROWS_AS(c.validate(), Error);

    c = RunConfig{};
    c.train.lr = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);

    c = RunConfig{};
    c.world.audio_feat_dim = 3;  // denoiser/capp copies now stale
    CHECK_THROWS_AS(c.validate(), Error);
    c.link_dims();
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("config files round-trip through disk") {
    const std::string dir = "test_config_tmp";
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/run.json";
    Rng rng(7);
    const RunConfig c = random_config(rng);
    save_config_file(c, path);
    CHECK(load_config_file(path) == c);
    std::filesystem::remove_all(dir);

    CHECK_THROWS_AS(load_config_file(dir + "/missing.json"), Error);
}

TEST_CASE("config hash is stable and sensitive") {
    RunConfig a;
    RunConfig b;
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    b.train.seed = 999;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("data root comes from the environment") {
    unsetenv("MOTIONDIFF_DATA_ROOT");
    CHECK(data_root() == ".");
    CHECK(resolve_path("x/y.bin") == "./x/y.bin");
    CHECK(resolve_path("/abs/z.bin") == "/abs/z.bin");
    setenv("MOTIONDIFF_DATA_ROOT", "/tmp/mdroot", 1);
    CHECK(data_root() == "/tmp/mdroot");
    CHECK(resolve_path("x/y.bin") == "/tmp/mdroot/x/y.bin");
    CHECK(resolve_path("/abs/z.bin") == "/abs/z.bin");
    unsetenv("MOTIONDIFF_DATA_ROOT");
}
