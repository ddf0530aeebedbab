#include "motiondiff/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "motiondiff/checkpoint.hpp"
#include "motiondiff/error.hpp"

namespace motiondiff {

namespace {

using Json = nlohmann::ordered_json;

std::string manifest_path(const std::string& dir) {
    return (std::filesystem::path(dir) / "manifest.json").string();
}

}  // namespace

std::string shard_path(const std::string& dir, int64_t index) {
    char name[32];
    std::snprintf(name, sizeof(name), "shard_%05lld.bin", static_cast<long long>(index));
    return (std::filesystem::path(dir) / name).string();
}

DatasetManifest write_dataset(const RunConfig& cfg, int64_t count, int64_t length, uint64_t seed,
                              const std::string& dir) {
    cfg.validate();
    require(count >= 1, ErrorKind::Contract, "dataset needs at least one sample");
    require(length >= 1, ErrorKind::Contract, "dataset samples need at least one frame");

    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        raise(ErrorKind::Io, "cannot create dataset directory '" + dir + "'");
    }

    double sum_d = 0.0;
    for (int64_t i = 0; i < count; ++i) {
        // Fresh root per shard keeps shards order-independent; fork consumes
        // a draw from its parent.
        Rng rng = Rng(seed).fork(static_cast<uint64_t>(i));
        const double g_theta = rng.uniform(-0.6, 0.6);
        const double g_phi = rng.uniform(-0.6, 0.6);
        const double d = rng.uniform(1.0, 2.0);
        Tensor e = Tensor::randn({cfg.world.emotion_dim}, rng);
        WorldSample s = generate_sample(cfg.world, length, g_theta, g_phi, d, e, rng);
        sum_d += d;

        Checkpoint shard;
        shard.put("audio", s.audio);
        shard.put("motion", s.motion);
        shard.put("cond", Tensor::from_vector({g_theta, g_phi, d}));
        shard.put("e", e);
        shard.save(shard_path(dir, i));
    }

    DatasetManifest m;
    m.count = count;
    m.length = length;
    m.total_frames = count * length;
    m.seed = seed;
    m.mean_distance = sum_d / static_cast<double>(count);
    m.hash = config_hash(cfg);
    m.config = cfg;

    Json j;
    j["count"] = m.count;
    j["length"] = m.length;
    j["total_frames"] = m.total_frames;
    j["seed"] = m.seed;
    j["mean_distance"] = m.mean_distance;
    j["config_hash"] = m.hash;
    j["config"] = Json::parse(emit_config(cfg));
    std::ofstream out(manifest_path(dir), std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(ErrorKind::Io, "cannot write manifest in '" + dir + "'");
    }
    out << j.dump(2) << "\n";
    require(bool(out), ErrorKind::Io, "failed writing manifest in '" + dir + "'");
    return m;
}

DatasetManifest read_manifest(const std::string& dir) {
    std::ifstream in(manifest_path(dir), std::ios::binary);
    if (!in) {
        raise(ErrorKind::Io, "cannot open dataset manifest in '" + dir + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    Json j;
    try {
        j = Json::parse(buf.str());
    } catch (const Json::exception& e) {
        raise(ErrorKind::Io, "dataset manifest in '" + dir + "' is corrupt: " + e.what());
    }

    DatasetManifest m;
    try {
        m.count = j.at("count").get<int64_t>();
        m.length = j.at("length").get<int64_t>();
        m.total_frames = j.at("total_frames").get<int64_t>();
        m.seed = j.at("seed").get<uint64_t>();
        m.mean_distance = j.at("mean_distance").get<double>();
        m.hash = j.at("config_hash").get<std::string>();
        m.config = parse_config(j.at("config").dump());
    } catch (const Json::exception& e) {
        raise(ErrorKind::Io, "dataset manifest in '" + dir + "' is incomplete: " + e.what());
    }
    require(m.hash == config_hash(m.config), ErrorKind::Io,
            "dataset manifest hash does not match its config echo in '" + dir + "'");
    return m;
}

WorldSample load_sample(const std::string& dir, int64_t index) {
    Checkpoint shard = Checkpoint::load(shard_path(dir, index));
    WorldSample s;
    s.audio = shard.get("audio");
    s.motion = shard.get("motion");
    const Tensor& cond = shard.get("cond");
    require(cond.shape() == std::vector<int64_t>{3}, ErrorKind::Io,
            "shard cond entry must have 3 values");
    s.g_theta = cond.raw()[0];
    s.g_phi = cond.raw()[1];
    s.d = cond.raw()[2];
    s.e = shard.get("e");
    return s;
}

}  // namespace motiondiff
