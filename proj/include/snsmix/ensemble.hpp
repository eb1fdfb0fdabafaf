#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "snsmix/control_lab.hpp"
#include "snsmix/lyapunov.hpp"
#include "snsmix/malliavin.hpp"
#include "snsmix/scalar_mixing.hpp"

namespace snsmix {

enum class ExperimentKind {
    Simulate,
    Lyapunov,
    Mixing,
    Batchelor,
    Drift,
    Malliavin,
    Control,
    Diagnostics
};

std::string kind_name(ExperimentKind k);
ExperimentKind kind_from_name(const std::string& name);

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Simulate;
    SolverConfig solver;
    EvalScheme scheme{EvalMode::DirectSum, 4};
    ProcessVariant variant = ProcessVariant::OnePoint;
    int ensemble = 1;
    double horizon = 10.0;
    double burn_in = 10.0;
    double sample_dt = 0.5;
    std::string out_dir = "out";
    std::uint64_t master_seed = 1;
    int threads = 1;
    bool resume = false;
    // V parameters (reported in outputs)
    double sigma = 0.1;
    double alpha = 1.0;
    double c_v = 5.0;
    // kind-specific knobs
    std::vector<int> n_grid{4, 8, 16, 32};             // batchelor
    std::vector<double> p_grid{0.05, 0.1, 0.2};        // drift
    int n_max = 10;                                    // drift lags
    double r0 = 1e-3;                                  // drift separation
    int k_max = 8;                                     // malliavin
    int inner_exponent = 4;
    int quad_points = 128;
    int projection_radius = 2;
    double checkpoint_every = 0.0;                     // simulate; 0 = off
    WaveIndex scalar_mode{1, 0};                       // mixing/batchelor source
    double control_eps = 0.1;                          // control
    double jacobian_target = 10.0;
    bool deterministic = false;                        // simulate: unforced decay run
    std::optional<WaveIndex> init_mode;                // simulate: e_k initial data
    double init_amp = 1.0;

    std::uint64_t trajectory_seed(int trajectory) const {
        return mix64(master_seed ^ mix64(static_cast<std::uint64_t>(trajectory)));
    }
};

/// Parses the JSON config file, applies defaults, validates Assumption 1 on F
/// (AssumptionError names the failed clause). Values may be overridden by
/// SNSMIX_SEED / SNSMIX_OUT / SNSMIX_THREADS environment variables.
ExperimentConfig validate_config(const std::string& path);
ExperimentConfig config_from_json_text(const std::string& text);

/// Canonical serialization (sorted keys) used for the config hash.
std::string canonical_config_json(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

struct RunManifest {
    std::uint64_t config_hash = 0;
    std::string code_version;
    std::vector<std::uint64_t> trajectory_seeds;
    double wall_time_s = 0.0;
    std::vector<std::string> outputs;

    std::string to_json() const;
};

/// Executes the configured experiment; writes NDJSON/CSV results plus
/// manifest.json into out_dir; returns the manifest.
RunManifest run_experiment(const ExperimentConfig& cfg);

inline constexpr const char* kCodeVersion = "0.1.0";

}  // namespace snsmix
