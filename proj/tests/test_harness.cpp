#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "motiondiff/error.hpp"
#include "motiondiff/harness.hpp"

using namespace motiondiff;

namespace {

RunConfig tiny_config() {
    RunConfig c;
    c.world.audio_feat_dim = 4;
    c.world.dyn_dim = 4;
    c.world.lip_channels = {0, 1};
    c.world.emotion_dim = 3;
    c.denoiser.window_len = 8;
    c.denoiser.prefix_len = 2;
    c.denoiser.embed_dim = 16;
    c.denoiser.heads = 2;
    c.denoiser.layers = 1;
    c.schedule.total_steps = 50;
    c.steps = 10;
    c.capp.window_len = 6;
    c.capp.embed_dim = 16;
    c.capp.heads = 2;
    c.capp.layers = 1;
    c.train.batch = 4;
    c.capp_train.batch = 4;
    c.link_dims();
    return c;
}

struct TempDir {
    std::string path;
    explicit TempDir(const std::string& p) : path(p) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("zero iterations still writes a valid loadable checkpoint") {
    RunConfig cfg = tiny_config();
    cfg.train.iterations = 0;
    TempDir dir("test_harness_tmp_a");
    write_dataset(cfg, 2, 32, 7, dir.path + "/data");

    const std::string ckpt = dir.path + "/model.ckpt";
    const TrainResult r = train_denoiser(cfg, dir.path + "/data", ckpt);
    CHECK(r.loss_log.empty());
    CHECK(r.mean_distance > 1.0);

    const ModelMeta meta = load_model_meta(ckpt);
    CHECK(meta.kind == "denoiser");
    CHECK(meta.trained_iterations == 0);
    CHECK(meta.mean_distance == r.mean_distance);
    CHECK(meta.config == cfg);

    Rng rng(0);
    Denoiser model(meta.config.denoiser, rng);
    ParameterList params;
    model.params(params);
    CHECK_NOTHROW(load_model_weights(params, ckpt));
}

TEST_CASE("training runs are deterministic given the seed") {
    RunConfig cfg = tiny_config();
    cfg.train.iterations = 4;
    TempDir dir("test_harness_tmp_b");
    write_dataset(cfg, 2, 32, 7, dir.path + "/data");

    const TrainResult r1 = train_denoiser(cfg, dir.path + "/data", dir.path + "/m1.ckpt");
    const TrainResult r2 = train_denoiser(cfg, dir.path + "/data", dir.path + "/m2.ckpt");
    REQUIRE(r1.loss_log.size() == r2.loss_log.size());
    for (size_t i = 0; i < r1.loss_log.size(); ++i) {
        CHECK(r1.loss_log[i] == r2.loss_log[i]);
    }
    CHECK(slurp(dir.path + "/m1.ckpt") == slurp(dir.path + "/m2.ckpt"));
}

TEST_CASE("loss log records every 100th iteration plus the final one") {
    RunConfig cfg = tiny_config();
    cfg.train.iterations = 205;
    cfg.train.batch = 2;
    TempDir dir("test_harness_tmp_c");
    write_dataset(cfg, 2, 32, 7, dir.path + "/data");

    const TrainResult r = train_denoiser(cfg, dir.path + "/data", dir.path + "/m.ckpt");
    REQUIRE(r.loss_log.size() == 3);
    CHECK(r.loss_log[0].first == 100);
    CHECK(r.loss_log[1].first == 200);
    CHECK(r.loss_log[2].first == 205);

    // Random-window x0 prediction should improve noticeably even this early.
    CHECK(r.loss_log[2].second < r.loss_log[0].second);

    const std::string csv = dir.path + "/loss.csv";
    write_loss_csv(r.loss_log, csv);
    const std::string text = slurp(csv);
    CHECK(text.rfind("iteration,loss\n", 0) == 0);
    CHECK(text.find("\n100,") != std::string::npos);
    CHECK(text.find("\n205,") != std::string::npos);
}

TEST_CASE("resuming from a checkpoint is deterministic") {
    RunConfig cfg = tiny_config();
    cfg.train.iterations = 3;
    TempDir dir("test_harness_tmp_d");
    write_dataset(cfg, 2, 32, 7, dir.path + "/data");
    train_denoiser(cfg, dir.path + "/data", dir.path + "/base.ckpt");

    cfg.train.iterations = 4;
    const TrainResult a =
        train_denoiser(cfg, dir.path + "/data", dir.path + "/r1.ckpt", dir.path + "/base.ckpt");
    const TrainResult b =
        train_denoiser(cfg, dir.path + "/data", dir.path + "/r2.ckpt", dir.path + "/base.ckpt");
    REQUIRE(a.loss_log.size() == b.loss_log.size());
    for (size_t i = 0; i < a.loss_log.size(); ++i) {
        CHECK(a.loss_log[i] == b.loss_log[i]);
    }
    CHECK(slurp(dir.path + "/r1.ckpt") == slurp(dir.path + "/r2.ckpt"));

    // Resumed weights differ from fresh ones, so the trajectories diverge.
    const TrainResult fresh = train_denoiser(cfg, dir.path + "/data", dir.path + "/f.ckpt");
    CHECK(a.loss_log.back().second != fresh.loss_log.back().second);
}

TEST_CASE("resume rejects a mismatched architecture or kind") {
    RunConfig cfg = tiny_config();
    cfg.train.iterations = 0;
    TempDir dir("test_harness_tmp_e");
    write_dataset(cfg, 2, 32, 7, dir.path + "/data");
    train_denoiser(cfg, dir.path + "/data", dir.path + "/base.ckpt");

    RunConfig other = cfg;
    other.denoiser.embed_dim = 32;
    other.link_dims();
    try {
        train_denoiser(other, dir.path + "/data", dir.path + "/x.ckpt", dir.path + "/base.ckpt");
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
    CHECK_THROWS_AS(load_model_meta(dir.path + "/never_written.ckpt"), Error);
}

TEST_CASE("dataset generated under another world is rejected") {
    RunConfig cfg = tiny_config();
    cfg.train.iterations = 1;
    TempDir dir("test_harness_tmp_f");
    RunConfig other = cfg;
    other.world.seed = 99;
    other.link_dims();
    write_dataset(other, 2, 32, 7, dir.path + "/data");
    try {
        train_denoiser(cfg, dir.path + "/data", dir.path + "/m.ckpt");
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        CHECK(std::string(e.what()).find("world") != std::string::npos);
    }
}

TEST_CASE("divergence aborts with the iteration number") {
    RunConfig cfg = tiny_config();
    cfg.train.iterations = 50;
    // One step of this size launches the weights far enough that the next
    // forward pass overflows, which must surface as a Training error.
    cfg.train.lr = 1e300;
    TempDir dir("test_harness_tmp_g");
    write_dataset(cfg, 2, 32, 7, dir.path + "/data");
    try {
        train_denoiser(cfg, dir.path + "/data", dir.path + "/m.ckpt");
        FAIL("expected a training error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Training);
        CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
}

TEST_CASE("capp training runs, logs, and checkpoints") {
    RunConfig cfg = tiny_config();
    cfg.capp_train.iterations = 5;
    TempDir dir("test_harness_tmp_h");
    write_dataset(cfg, 3, 32, 7, dir.path + "/data");

    const std::string ckpt = dir.path + "/capp.ckpt";
    const TrainResult r = train_capp(cfg, dir.path + "/data", ckpt);
    REQUIRE(r.loss_log.size() == 1);
    CHECK(r.loss_log[0].first == 5);
    CHECK(std::isfinite(r.loss_log[0].second));

    const ModelMeta meta = load_model_meta(ckpt);
    CHECK(meta.kind == "capp");
    Rng rng(0);
    CappModel model(meta.config.capp, rng);
    ParameterList params;
    model.params(params);
    CHECK_NOTHROW(load_model_weights(params, ckpt));

    // Too few distinct window starts for the batch is a config error.
    RunConfig cramped = cfg;
    cramped.capp_train.batch = 64;
    try {
        train_capp(cramped, dir.path + "/data", dir.path + "/c2.ckpt");
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
}
