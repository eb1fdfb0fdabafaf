#pragma once

#include <cstdint>
#include <vector>

#include "snsmix/sns_dynamics.hpp"

namespace snsmix {

struct ScalarState {
    SpectralField phi;
    double t = 0.0;
};

/// Heun step of the zero-diffusivity transport d phi/dt = -u . grad phi with
/// 2/3-rule dealiasing; u is induced by the vorticity snapshots at the two
/// stage times. Mean stays zero; the dealias truncation is the only L2 leak.
void advect_scalar(ScalarState& phi, const SpectralField& omega_old,
                   const SpectralField& omega_new, double dt);

/// Transport step plus additive Ito source g dB: adds g * xi after the
/// transport sub-step, xi ~ N(0, dt) drawn from the scalar lane of the stream.
void advect_scalar_forced(ScalarState& phi, const SpectralField& omega_old,
                          const SpectralField& omega_new, double dt, const SpectralField& g,
                          const NoiseStream& noise, std::uint64_t lane = kLaneScalarSource);

// --- mixing-rate fits -------------------------------------------------------------

struct MixingFit {
    double rate = 0.0;  ///< per unit time; negative for a mixing field
    double logK = 0.0;  ///< fitted intercept (log prefactor)
    double r_squared = 0.0;
    double t0 = 0.0, t1 = 0.0;
};

/// OLS of log(norm) against t on [t0, t1]. FitError on nonpositive norms or
/// fewer than 10 samples in the window.
MixingFit mixing_rate_fit(const std::vector<double>& t, const std::vector<double>& norms,
                          double t0, double t1);

// --- universal mixing aggregation ----------------------------------------------------

struct ModeFit {
    WaveIndex k;
    double prefactor = 0.0;  ///< K_k with ||Phi_t e_k||_{H-1} <= K_k e^{-alpha t}
    double rate = 0.0;       ///< fitted (negative) rate for this mode
};

struct UniversalMixingReport {
    double K = 0.0;      ///< sum_{0<|k|<=Kmax} |k|^{-3} K_k
    double alpha = 0.0;  ///< common rate floor (min |rate|)
    double universal_rate = 0.0;  ///< alpha / 3 (H^1 -> H^-1 interpolation)
    double universal_prefactor = 0.0;  ///< K^{1/3}
};

/// CoverageError if any mode 0 < |k| <= k_max is missing from fits.
UniversalMixingReport universal_mixing_bound(const std::vector<ModeFit>& fits, int k_max);

// --- cumulative Batchelor spectrum ---------------------------------------------------

/// ||Pi_{<=N} phi||_{L2}^2.
double cumulative_spectrum(const SpectralField& phi, double N);

/// Smallest integer M >= 1 with ||Pi_{<=sqrt(M)} g|| >= (3/4) ||g||.
int batchelor_n0(const SpectralField& g);

struct BatchelorConfig {
    SolverConfig solver;
    std::vector<int> n_grid{4, 8, 16, 32};
    double T = 30.0;
    int ensemble = 128;
    std::uint64_t seed = 11;
    double sample_dt = 0.25;
};

struct BatchelorReport {
    int n0 = 0;
    std::vector<int> n_grid;         ///< filtered to N >= max(n0, 2)
    std::vector<double> mean;        ///< late-window ensemble mean of ||Pi_<=N phi||^2
    std::vector<double> stderr_;
    double slope = 0.0;              ///< OLS of mean against log N
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Forced scalar (phi_0 = 0) advected by the stochastic velocity; late-window
/// [T/2, T] time average per trajectory, then ensemble statistics. Throws
/// SpectrumRangeError if the whole grid lies below max(n0, 2).
BatchelorReport batchelor_run(const BatchelorConfig& cfg, const SpectralField& g,
                              int threads = 1);

// --- multi-scalar transport runs ------------------------------------------------------

struct MixingRunConfig {
    SolverConfig solver;
    double T = 40.0;
    double sample_dt = 0.5;
    int ensemble = 32;
    std::uint64_t seed = 13;
    double spin_up = 10.0;  ///< velocity spin-up before releasing the scalars
};

struct MixingRunResult {
    std::vector<double> t;
    /// hminus1[datum][path][time], also l2 for the conservation diagnostics
    std::vector<std::vector<std::vector<double>>> hminus1;
    std::vector<std::vector<std::vector<double>>> l2;
};

/// Advects several initial data along the same velocity path per trajectory
/// (the scalars share the transforms' cost and the noise stream).
MixingRunResult run_mixing_paths(const MixingRunConfig& cfg,
                                 const std::vector<SpectralField>& initial_data,
                                 int threads = 1);

}  // namespace snsmix
