#pragma once

#include "pixpatch/evolve.hpp"
#include "pixpatch/mesh.hpp"
#include "pixpatch/solver.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pixpatch {

struct FrequencyGrid {
    double start = 12e9;
    double stop = 20e9;
    int points = 401;
    double noise_floor_rel = 1e-9;

    std::vector<double> values() const;
    bool operator==(const FrequencyGrid&) const = default;
};

/// Every tunable of a run. Defaults reproduce the "paper" preset.
struct RunConfig {
    SeedDimensions dims;
    MeshConfig mesh;
    SourceSpec source;
    FitnessConfig fitness;
    GaSettings ga;
    FrequencyGrid freqs;
    double z0 = 50.0;
    int workers = 1;
    std::string output_dir = "pixpatch-run";
    std::string cache_dir;  // empty: <output_dir>/cache

    RunConfig();

    /// Validates the whole configuration; the message starts with the offending key.
    void validate() const;

    std::string resolved_cache_dir() const;

    /// Hash of every setting that influences results (excludes generations,
    /// workers and directories), used to match checkpoints to configurations.
    std::uint64_t fingerprint() const;

    bool operator==(const RunConfig& other) const;
};

/// "paper" or "smoke". Throws ValidationError for unknown names.
RunConfig preset(std::string_view name);

/// Sets one key from its text value. Throws ValidationError naming the key.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// Flat "key = value" lines, '#' starts a comment. Applied on top of `base`.
RunConfig parse_config(std::string_view text, RunConfig base = RunConfig());

/// Canonical text form: every key, fixed order, 17 significant digits.
std::string format_config(const RunConfig& cfg);

std::vector<std::string> config_keys();

} // namespace pixpatch
