#pragma once

#include <cstdint>
#include <string>

#include "motiondiff/capp.hpp"
#include "motiondiff/denoiser.hpp"
#include "motiondiff/diffusion.hpp"
#include "motiondiff/world.hpp"

namespace motiondiff {

struct TrainConfig {
    int64_t batch = 16;
    int64_t iterations = 2000;
    double lr = 1e-4;
    uint64_t seed = 1;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

// Locations are resolved against the data root (see data_root) when
// relative, so a config file stays portable across machines.
struct PathsConfig {
    std::string dataset = "dataset";
    std::string checkpoint = "denoiser.ckpt";
    std::string capp_checkpoint = "capp.ckpt";
    std::string report = "report.csv";

    void validate() const;
    bool operator==(const PathsConfig&) const = default;
};

// Everything one run needs. Dimensions that several modules must agree on
// (motion/audio/emotion widths, diffusion step count) live once in `world`
// and `schedule`; link_dims copies them into the denoiser and CAPP configs,
// and the file format never carries the copies. Every field has a default
// and an empty config file describes a runnable desk-scale setup.
struct RunConfig {
    WorldConfig world;
    DenoiserConfig denoiser;
    ScheduleConfig schedule;
    CappConfig capp;
    TrainConfig train;
    TrainConfig capp_train{16, 1500, 3e-4, 2};
    CfgScales cfg_defaults;
    int64_t steps = 50;  // sampling steps unless overridden per command
    PathsConfig paths;

    // Copies the shared dimensions from world/schedule into denoiser/capp.
    void link_dims();
    // Validates every sub-config and the cross-module links.
    void validate() const;

    bool operator==(const RunConfig&) const = default;
};

// JSON with every owned field present, stable key order, round-trip exact
// doubles. parse(emit(c)) == c for any valid c.
std::string emit_config(const RunConfig& cfg);

// Accepts any subset of the emitted fields (missing ones keep defaults) and
// rejects unknown keys. Runs link_dims; the result is not yet validated.
RunConfig parse_config(const std::string& text);

RunConfig load_config_file(const std::string& path);
void save_config_file(const RunConfig& cfg, const std::string& path);

// $MOTIONDIFF_DATA_ROOT, or "." when unset or empty.
std::string data_root();

// Absolute paths pass through; relative ones attach to the data root.
std::string resolve_path(const std::string& path);

// FNV-1a 64 over the emitted text, as 16 hex digits. Stable across runs, so
// dataset manifests can pin the exact configuration that produced them.
std::string config_hash(const RunConfig& cfg);

}  // namespace motiondiff
