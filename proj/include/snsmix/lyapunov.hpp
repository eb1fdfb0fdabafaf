#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "snsmix/lagrangian_flows.hpp"

namespace snsmix {

struct EstimateWithCI {
    double value = 0.0;
    double stderr_ = 0.0;
    int n_samples = 0;
    double ci_lo = 0.0;  ///< value - 1.96 stderr
    double ci_hi = 0.0;
};

EstimateWithCI make_estimate(const std::vector<double>& samples);

/// Common run parameters for the Lyapunov estimators. Trajectories start from
/// omega = 0 with random x0 (and v0/A0), spin up for burn_in time units, then
/// accumulate over [burn_in, burn_in + horizon]; the cocycle is reset at the
/// end of burn-in.
struct LyapunovConfig {
    SolverConfig solver;
    EvalScheme scheme{EvalMode::DirectSum, 4};
    double burn_in = 10.0;
    double horizon = 50.0;
    int ensemble = 64;
    std::uint64_t seed = 1;
    double renorm_threshold = 1e6;
};

struct LambdaReport {
    EstimateWithCI estimate;       ///< window [burn, burn + T]
    EstimateWithCI half_estimate;  ///< window [burn, burn + T/2] (finite-T bias probe)
    std::vector<double> per_trajectory;
};

/// lambdaic = T^{-1} (log ||A_T||_op + log_accum), ensemble mean with CI.
LambdaReport estimate_lambda_jacobian(const LyapunovConfig& cfg, int threads = 1);

/// Time-and-ensemble average of v . grad u(x) v along the projective process.
LambdaReport estimate_lambda_projective(const LyapunovConfig& cfg, int threads = 1);

/// Synthetic-gradient variants of the estimators (test hook; frozen grad).
double lambda_jacobian_synthetic(const Mat2& grad, const Vec2& x0, double T, double dt);
double lambda_projective_synthetic(const Mat2& grad, Vec2 v0, double T, double dt);

// --- two-point geometry -------------------------------------------------------

/// Tangent vector at a two-point state; the H^5 velocity part is carried as
/// its vorticity (||v_u||_{H^5} = ||curl v_u||_{H^4} for mean-zero fields).
struct TwoPointTangent {
    SpectralField omega_part;
    Vec2 vx = Vec2::Zero();
    Vec2 vy = Vec2::Zero();
};

/// ||v||_{H^5,2} = ||v_u||_{H^5} + |v_x + v_y| + |v_x - v_y| / |x - y|.
double twopoint_metric(const TwoPointTangent& v, const Vec2& x, const Vec2& y);

struct TwoPointZ {
    SpectralField omega;
    Vec2 x = Vec2::Zero();
    Vec2 y = Vec2::Zero();
};

/// Straight-chord upper bound on the d_V path infimum:
/// int_0^1 ||gamma'||_{H^5,2} exp(V(gamma(s))/2) ds by Gauss-Legendre
/// quadrature. Throws DiagonalError if the chord crosses the diagonal.
double d_chord(const TwoPointZ& z1, const TwoPointZ& z2, double sigma, double alpha,
               int quad_points = 32);

/// 1 and beta^{-1} d_chord.
double d_beta(const TwoPointZ& z1, const TwoPointZ& z2, double beta, double sigma,
              double alpha, int quad_points = 32);

// --- drift condition -------------------------------------------------------------

struct DriftConfig {
    SolverConfig solver;
    EvalScheme scheme{EvalMode::DirectSum, 4};
    double r0 = 1e-3;
    std::vector<double> p_grid{0.05, 0.1, 0.2};
    int n_max = 10;  ///< integer lags 1..n_max (time units)
    int ensemble = 512;
    std::uint64_t seed = 7;
    double c_v = 5.0;  ///< V(u0) filter level
    double sigma = 0.1;
    double alpha = 1.0;
    double spin_up = 20.0;  ///< stochastic spin-up before the unforced decay
    int bootstrap = 400;
};

struct DriftReport {
    std::vector<double> p_grid;
    std::vector<int> n_grid;
    // ratio[ip][in] = mean (f_n/f_0)^p with bootstrap CI
    std::vector<std::vector<double>> ratio;
    std::vector<std::vector<double>> ci_lo;
    std::vector<std::vector<double>> ci_hi;
    bool pass = false;  ///< some (p,n): ratio < 0.95 and CI upper bound < 1
};

/// f(u,x,y) = |x-y|^{-1} e^{V(u)}; initial ensemble filtered by running the
/// unforced equation until V <= c_v.
DriftReport drift_check(const DriftConfig& cfg, int threads = 1);

// --- correlation decay ------------------------------------------------------------

struct CorrelationConfig {
    SolverConfig solver;
    EvalScheme scheme{EvalMode::DirectSum, 4};
    WaveIndex k{1, 0};
    Vec2 x0{0.0, 0.0};
    Vec2 y0{1.0, 0.0};
    double T = 20.0;
    double sample_dt = 0.5;
    int ensemble = 64;
    std::uint64_t seed = 5;
    double spin_up = 10.0;
};

struct CorrelationSeries {
    std::vector<double> t;
    std::vector<double> mean;  ///< E e_k(x_t) e_k(y_t)
    std::vector<double> stderr_;
};

CorrelationSeries correlation_decay(const CorrelationConfig& cfg, int threads = 1);

/// Work-queue helper shared by the ensemble modules: runs fn(i) for
/// i in [0, n) on the given number of threads.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace snsmix
