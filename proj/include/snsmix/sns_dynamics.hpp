#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "snsmix/spectral_field.hpp"

namespace snsmix {

enum class Scheme : std::uint8_t { IntegratingFactorHeun = 0 };

struct SolverConfig {
    double nu = 0.1;
    double dt = 5e-3;
    GridSpec grid;
    ForcingSet forcing = default_forcing();
    Scheme scheme = Scheme::IntegratingFactorHeun;

    void validate() const {
        grid.validate();
        forcing.validate();
        if (!(nu > 0.0)) throw ConfigError("SolverConfig: nu > 0 required");
        if (!(dt > 0.0 && dt <= 0.1))
            throw ConfigError("SolverConfig: 0 < dt <= 0.1 required");
        const int K = grid.cutoff();
        for (const auto& k : forcing.modes)
            if (std::abs(k.kx) > K || std::abs(k.ky) > K)
                throw ConfigError("SolverConfig: forced mode " + k.str() + " outside cutoff");
    }
};

/// Counter-based noise source: every Gaussian is a pure function of
/// (seed, trajectory_id, counter, lane); bit-reproducible and resumable.
struct NoiseStream {
    std::uint64_t seed = 0;
    std::uint64_t trajectory_id = 0;
    std::uint64_t counter = 0;

    /// N(0,1) draw for this step's given lane (does not advance the counter).
    double normal(std::uint64_t lane) const {
        return gaussian_draw(seed, trajectory_id, counter, lane);
    }
    double uniform(std::uint64_t lane, double lo, double hi) const {
        return uniform_draw(seed, trajectory_id, counter, lane, lo, hi);
    }
    void advance() { ++counter; }
};

struct VorticityState {
    SpectralField omega;
    double t = 0.0;
};

/// Piecewise-constant rates g-dot^k(t) on [breakpoints[i], breakpoints[i+1]);
/// |rate| <= 1 everywhere (Lipschitz control with unit slope bound).
class ControlProgram {
  public:
    ControlProgram() = default;
    /// breakpoints has one more entry than rate rows; rates[i][m] is the rate
    /// of forcing mode m on [breakpoints[i], breakpoints[i+1]).
    ControlProgram(std::vector<double> breakpoints, std::vector<std::vector<double>> rates);

    bool empty() const { return rates_.empty(); }
    double start() const { return empty() ? 0.0 : breakpoints_.front(); }
    double end() const { return empty() ? 0.0 : breakpoints_.back(); }
    std::size_t piece_count() const { return rates_.size(); }
    std::size_t mode_count() const { return rates_.empty() ? 0 : rates_[0].size(); }

    /// Rate vector at time t; ControlGapError outside [start, end).
    const std::vector<double>& rate_at(double t) const;

    /// Covers [t0, t1] (up to an fp tolerance at the right edge)?
    bool covers(double t0, double t1) const;

    /// Appends a constant-rate piece of the given duration.
    void append_piece(double duration, std::vector<double> rates);

    /// Concatenation: other shifted to start at this->end().
    ControlProgram then(const ControlProgram& other) const;

    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<std::vector<double>>& rates() const { return rates_; }

    /// CSV columns: t_start,t_end,gdot_<mode>...
    void write_csv(std::ostream& os, const ForcingSet& F) const;

  private:
    std::vector<double> breakpoints_;
    std::vector<std::vector<double>> rates_;
};

/// One pseudo-spectral stepper; owns scratch buffers, safe to use from one
/// thread at a time. The viscous factor is exact; the dealiased nonlinearity
/// is treated with explicit trapezoidal (Heun) stages; the additive forcing
/// enters in mild form, e.g. the noise on mode k carries the exact OU
/// variance c_k^2 (1 - e^{-2 nu |k|^2 dt}) / (2 nu |k|^2).
class SnsStepper {
  public:
    explicit SnsStepper(const SolverConfig& cfg);

    const SolverConfig& config() const { return cfg_; }

    /// Advances one dt with white-in-time forcing; advances noise.counter.
    void step_stochastic(VorticityState& state, NoiseStream& noise);

    /// Advances one dt with deterministic rates g-dot from the program.
    void step_controlled(VorticityState& state, const ControlProgram& prog);

    /// Unforced deterministic step.
    void step_decay(VorticityState& state);

    /// Test hook: advances with caller-provided noise amplitudes xi[m]
    /// (already scaled; added to mode m's coefficient pattern).
    void step_with_injection(VorticityState& state, const std::vector<double>& xi);

  private:
    void deterministic_stage(VorticityState& state);
    void check_finite(const VorticityState& state) const;

    SolverConfig cfg_;
    std::vector<double> ifac_;      // e^{-nu |k|^2 dt} per flat index
    std::vector<double> noise_std_; // exact OU std per forcing mode
    SpectralField k1_, stage_, k2_;
};

/// Super-Lyapunov diagnostic V(omega) = sigma (||omega||_{L2}^2 + alpha ||omega||_{H4}^{1/3}).
double lyapunov_V(const SpectralField& omega, double sigma, double alpha);

struct EnergySample {
    double t = 0.0;
    double l2sq = 0.0;        // ||omega||_{L2}^2
    double h1sq = 0.0;        // ||omega||_{H1}^2
    double visc_integral = 0.0;  // nu int_0^t ||omega||_{H1}^2 (trapezoid)
    double h4_pow = 0.0;      // ||omega||_{H4}^{1/3}
};

EnergySample energy_sample(const VorticityState& s, double nu, const EnergySample* prev);

struct EnergyDiagnostics {
    std::vector<double> t;
    std::vector<double> mean_l2sq;       // ensemble mean ||omega||^2
    std::vector<double> mean_h1sq;
    std::vector<double> residual;        // d/dt E||omega||^2 + 2 nu E||grad omega||^2 - injection
    double injection_rate = 0.0;         // sum_k c_k^2 ||e_k||^2
};

/// Ensemble Ito balance diagnostics from per-trajectory energy series sampled
/// at common times (series[i] is one trajectory).
EnergyDiagnostics energy_diagnostics(const std::vector<std::vector<EnergySample>>& series,
                                     const SolverConfig& cfg);

/// sum_k c_k^2 ||e_k||_{L2}^2 = sum_k c_k^2 2 pi^2.
double injection_rate(const ForcingSet& F);

// --- checkpointing -------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointFormatVersion = 2;

struct Checkpoint {
    SolverConfig cfg;
    VorticityState state;
    NoiseStream noise;
    /// coupled-process extension: tagged manifold coordinates + log_accum
    /// (written as raw doubles; tag 0 means no manifold state)
    std::uint8_t point_tag = 0;
    std::vector<double> point_coords;
    double log_accum = 0.0;
};

/// Versioned little-endian binary layout: magic "SNSC", version, solver config,
/// state time, field payload, (seed, trajectory_id, counter), then the coupled
/// process extension. A restart from a checkpoint is bit-identical to the
/// unbroken run.
void write_checkpoint(std::ostream& os, const Checkpoint& c);
Checkpoint read_checkpoint(std::istream& is);

}  // namespace snsmix
