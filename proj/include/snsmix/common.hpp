#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace snsmix {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

// ---------------------------------------------------------------------------
// Error taxonomy. Config/usage faults derive from ConfigError (CLI exit 3),
// runtime numerical faults from NumericalError (CLI exit 2).
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Requested mode lies outside the dealias cutoff.
struct CutoffError : ConfigError {
    using ConfigError::ConfigError;
};

/// Forcing set violates Assumption 1 (F = -F, two distinct norms, Z-span).
struct AssumptionError : ConfigError {
    using ConfigError::ConfigError;
};

/// NaN/overflow in spectral coefficients.
struct BlowupError : NumericalError {
    explicit BlowupError(const std::string& what, double last_time)
        : NumericalError(what), t_last(last_time) {}
    double t_last;  ///< time of the last finite state
};

/// Control program does not cover the requested step interval.
struct ControlGapError : ConfigError {
    using ConfigError::ConfigError;
};

/// Two-point process hit the diagonal (invariant in the continuum).
struct DiagonalError : NumericalError {
    using NumericalError::NumericalError;
};

/// Zero vector where a direction is required.
struct DegenerateError : NumericalError {
    using NumericalError::NumericalError;
};

/// Direction/process variant does not match the configured one.
struct VariantError : ConfigError {
    using ConfigError::ConfigError;
};

/// Galerkin dimension exceeds the memory guard.
struct DimensionError : ConfigError {
    using ConfigError::ConfigError;
};

/// Regression input invalid (nonpositive norms, short window).
struct FitError : NumericalError {
    using NumericalError::NumericalError;
};

/// Universal-mixing aggregation is missing a required mode.
struct CoverageError : ConfigError {
    using ConfigError::ConfigError;
};

/// Requested spectrum grid lies entirely below N0(g).
struct SpectrumRangeError : ConfigError {
    using ConfigError::ConfigError;
};

/// Planner failed to reach the target within its search budget.
struct PlanFailure : NumericalError {
    using NumericalError::NumericalError;
};

// ---------------------------------------------------------------------------
// Counter-based randomness. Stateless: every Gaussian is a pure function of
// (seed, trajectory_id, counter, lane), so trajectories can be evaluated in
// any order or resumed without replaying streams.
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer (Vigna); bijective with full avalanche.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t trajectory,
                                  std::uint64_t counter, std::uint64_t lane) {
    return mix64(seed ^ mix64(trajectory ^ mix64(counter ^ mix64(lane))));
}

/// Uniform double in (0,1), never exactly 0 or 1.
inline double u64_to_unit(std::uint64_t x) {
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal via Box-Muller from two hashed draws.
inline double gaussian_draw(std::uint64_t seed, std::uint64_t trajectory,
                            std::uint64_t counter, std::uint64_t lane) {
    const double u1 = u64_to_unit(counter_hash(seed, trajectory, counter, 2 * lane));
    const double u2 = u64_to_unit(counter_hash(seed, trajectory, counter, 2 * lane + 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

/// Uniform double in [lo, hi) from a hashed draw.
inline double uniform_draw(std::uint64_t seed, std::uint64_t trajectory,
                           std::uint64_t counter, std::uint64_t lane,
                           double lo, double hi) {
    return lo + (hi - lo) * u64_to_unit(counter_hash(seed, trajectory, counter, 2 * lane));
}

/// FNV-1a 64-bit, used for config hashes recorded in outputs.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Noise lane layout: forcing modes occupy lanes [0, |F|); auxiliary streams
// (scalar source, initial-condition sampling) start well above.
inline constexpr std::uint64_t kLaneScalarSource = 4096;
inline constexpr std::uint64_t kLaneInitSampling = 8192;

}  // namespace snsmix
