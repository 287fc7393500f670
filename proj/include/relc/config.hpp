#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "relc/dynamics.hpp"
#include "relc/kernels.hpp"
#include "relc/lattice.hpp"
#include "relc/profiles.hpp"

namespace relc {

inline constexpr const char* kCodeVersion = "relc 1.0.0";

// ---------------------------------------------------------------------------
// Run configuration. Parsed strictly from JSON: unknown keys are rejected at
// every level, and every defaulted value is resolved into the canonical dump
// so the manifest records the exact run. See the README for the schema.
// ---------------------------------------------------------------------------

struct BranchConfig {
    std::complex<double> c{0.0, 0.0};
    std::vector<SourceRegion> regions;
};

struct ExperimentConfig {
    std::vector<BranchConfig> branches;
    int paths = 200;
    bool random_foliations = false; // "time" (default) or "random"
    int sigma_final = 0;            // resolved to the top level when defaulted
    NMode n_mode = NMode::kPlateau;
};

struct OutputConfig {
    std::string dir = "out";
    bool csv = true;
    bool json_out = true;
    bool svg = true;
};

struct RunConfig {
    LatticeSpec lattice{60, 1200, 0.05, 1e-6, -1.475};
    KernelParams kernel;      // k=1, static tensor resolved from T00_static
    CollapseParams collapse;  // λ=0.5, ε=0.02, exponential, nonlinear
    ExperimentConfig experiment;
    OutputConfig output;
    std::uint64_t seed = 0;
    bool has_experiment_block = false; // whether the key was present at all

    // The lattice the dynamics actually runs on: time levels truncated at
    // sigma_final (kernels and profiles clip to it consistently).
    LatticeSpec run_lattice() const;
    // Branch set with J filled from the regions, E = J², and N built in the
    // configured image mode.
    BranchSet build_branches() const;

    nlohmann::ordered_json resolved() const; // fully-defaulted config JSON
    std::string canonical() const;           // compact dump of resolved()
    std::uint64_t config_hash() const;       // FNV-1a 64, output block excluded
    std::string hash_hex() const;            // 16 lowercase hex digits
};

// Strict parse of a config object (throws ConfigError on any violation).
RunConfig parse_config(const std::string& json_text);
// File loader; accepts either a bare config or a manifest that embeds one.
RunConfig load_config(const std::string& path);

// The run manifest: code version, config hash, seed, resolved config.
nlohmann::ordered_json make_manifest(const RunConfig& config);

} // namespace relc
