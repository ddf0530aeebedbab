#pragma once

#include <cstdint>
#include <string>

#include "motiondiff/config.hpp"
#include "motiondiff/world.hpp"

namespace motiondiff {

// Describes one generated dataset directory: shard_NNNNN.bin files in the
// versioned binary container plus manifest.json carrying the counts, the
// generation seed, the full config echo, and its hash.
struct DatasetManifest {
    int64_t count = 0;
    int64_t length = 0;        // frames per sample
    int64_t total_frames = 0;  // count * length
    uint64_t seed = 0;
    double mean_distance = 0.0;  // over the per-sample d draws
    std::string hash;            // config_hash of `config`
    RunConfig config;
};

std::string shard_path(const std::string& dir, int64_t index);

// Generates `count` samples of `length` frames and writes them as shards.
// Sample i draws its conditions and trajectory from Rng(seed).fork(i), so
// shards are independent of generation order and byte-identical across runs
// with the same seed. Conditions per sample: g_theta, g_phi ~ U(-0.6, 0.6),
// d ~ U(1, 2), e ~ N(0, I).
DatasetManifest write_dataset(const RunConfig& cfg, int64_t count, int64_t length, uint64_t seed,
                              const std::string& dir);

DatasetManifest read_manifest(const std::string& dir);

// Loads shard `index`. The latent driver fields (content, prosody) are not
// stored and come back empty.
WorldSample load_sample(const std::string& dir, int64_t index);

}  // namespace motiondiff
