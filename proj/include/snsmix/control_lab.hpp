#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "snsmix/lagrangian_flows.hpp"

namespace snsmix {

/// f_{k,t}(x) = x + t grad^perp Lap^{-1} e_k(x). Since k.x is constant along
/// the single-mode flow, this is the exact time-t flow of the frozen field.
struct DiffeoStep {
    WaveIndex k;
    double t = 0.0;  ///< signed duration
};

/// Velocity of the forced mode, X_k = grad^perp Lap^{-1} e_k:
/// sin branch: cos(k.x) (k2,-k1)/|k|^2; cos branch: sin(k.x) (-k2,k1)/|k|^2.
Vec2 mode_velocity(const WaveIndex& k, const Vec2& x);
/// grad X_k, (i,j) = d_i (X_k)_j; nilpotent (proportional to k^perp tensor k).
Mat2 mode_velocity_grad(const WaveIndex& k, const Vec2& x);

Vec2 flow_diffeo(const DiffeoStep& step, const Vec2& x);
/// d f_{k,t} at x: I + t grad X_k(x) (exact, the shear is nilpotent).
Mat2 flow_diffeo_grad(const DiffeoStep& step, const Vec2& x);

struct PlanReport {
    ControlProgram program;
    std::vector<DiffeoStep> plan;  ///< abstract diffeomorphism schedule
    double eps = 0.0;
    bool pass = false;
    /// per-variant endpoint error components (see planner docs), each < eps
    /// required for pass
    std::vector<double> error_components;
    double predicted_u_norm = 0.0;
    std::map<std::string, double> log;  ///< step diagnostics (iterations, obstructions)
};

struct ControlContext {
    SolverConfig solver;
    EvalScheme scheme{EvalMode::DirectSum, 4};
    double amplitude = 0.4;       ///< plateau vorticity amplitude of bump controls
    double t_max = 2000.0;        ///< planner search budget (PlanFailure beyond)
    double workable_threshold = 0.3;  ///< |sin| level demanded by the walk stages
    double sigma = 0.1;           ///< V parameters for reporting
    double alpha = 1.0;
};

/// Drives (u, x, v) so that v reaches v_target (decay of u; alignment moves of
/// x to 0; four-flow winding loop searched over its duration). The report's
/// error components are (||u_T||_{H5}, |v_T - v_target|).
PlanReport plan_projective_control(const ControlContext& ctx, const SpectralField& omega0,
                                   const Vec2& x0, const Vec2& v0, const Vec2& v_target,
                                   double eps);

/// Drives (u, x, y) near (0, 0, y_tilde) with y_tilde = (pi/2, 0) (both
/// |sin(k0.y_tilde)| and |sin(k1.y_tilde)| = 1). Error components are
/// (||u_T||_{H5}, |x_T|, |y_T - y_tilde|).
PlanReport plan_twopoint_control(const ControlContext& ctx, const SpectralField& omega0,
                                 const Vec2& x0, const Vec2& y0, double eps);

/// Constant-rate program gdot^{k0} = delta from (0, 0, Id) reaching
/// ||A_T||_op > M with sup_t ||u_t||_{H5} < 0.2 (delta halved until the
/// smallness constraint holds). Error components are
/// (||u_T||_{H5} against 0.2, margin of ||A_T|| over M).
PlanReport plan_jacobian_growth(const ControlContext& ctx, double M);

/// Target of a closed-loop verification; unset components are not scored.
struct ControlTarget {
    std::optional<Vec2> x;
    std::optional<Vec2> y;
    std::optional<Vec2> v;            ///< projective direction (compared up to sign flip? no: on S^1)
    std::optional<double> jacobian_norm_min;  ///< require ||A_T||_op > this
    double u_norm_bound = 0.0;        ///< require ||u_T||_{H5} < max(eps, this)
};

/// Integrates the controlled PDE + process over the program horizon and
/// scores the endpoint against the target; pass iff every component < eps
/// (the Jacobian norm component passes when the growth target is met).
PlanReport verify_control(const ControlContext& ctx, const ControlProgram& program,
                          CoupledState initial, const ControlTarget& target, double eps);

// --- building blocks exposed for tests ------------------------------------------------

/// Realizes the diffeomorphism f_{k,s} as a bump-profile single-mode control:
/// ramp at |gdot| = 1 to a vorticity plateau, hold, ramp down; the integral of
/// the mode amplitude equals s exactly (closed forms of the linear mode ODE).
ControlProgram realize_diffeo(const ControlContext& ctx, const DiffeoStep& step);

/// Zero-rate program of the given duration (Step-0 decay).
ControlProgram decay_program(const ControlContext& ctx, double duration);

/// Workable-region predicate R_k: |sin(k.y)| >= 1/(100 max_{k' in F} |k'|).
bool in_workable_region(const WaveIndex& k, const Vec2& y, const ForcingSet& F);

}  // namespace snsmix
