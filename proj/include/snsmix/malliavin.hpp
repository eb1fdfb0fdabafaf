#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "snsmix/lagrangian_flows.hpp"

namespace snsmix {

/// Galerkin space for the linearized coupled system: spectral modes with
/// 0 < |k| <= k_max paired with an H^n inner product, plus the ambient tangent
/// coordinates of the chosen Table-1 manifold. The linearized field is
/// confined to the mode ball after every step, so propagator matrices satisfy
/// the exact semigroup property on the subspace.
struct GalerkinSpec {
    int k_max = 8;
    int inner_exponent = 4;  ///< n of the <.,.>_{H^n} pairing
    ProcessVariant variant = ProcessVariant::OnePoint;

    /// Ambient tm dimension: Base 0, OnePoint 2, Projective 3 (y, w),
    /// Tangent/TwoPoint 4, Jacobian 6 (y + flattened 2x2 B).
    int tm_ambient_dim() const;
    /// Tangent-space dimension at a point: as above but 5 for Jacobian.
    int tm_tangent_dim() const;
};

/// Lex-positive-ordered real modes with 0 < |k| <= k_max (each entry is one
/// e_k; both sin and cos branches appear since -k is listed too).
std::vector<WaveIndex> galerkin_modes(int k_max);

struct DirectionVector {
    SpectralField h;       ///< spectral part (confined to the Galerkin ball)
    Eigen::VectorXd tm;    ///< ambient tangent coordinates (see GalerkinSpec)
};

/// <p, q> = <h_p, h_q>_{H^n} + tm_p . tm_q (embedded Frobenius on SL(2)).
double direction_inner(const DirectionVector& a, const DirectionVector& b, int n_exponent);

/// Base trajectory with states stored at every step (t_i = t0 + i dt).
struct BasePath {
    SolverConfig cfg;
    EvalScheme scheme{EvalMode::DirectSum, 4};
    std::vector<CoupledState> states;

    double dt() const { return cfg.dt; }
    int steps() const { return static_cast<int>(states.size()) - 1; }
    double horizon() const { return steps() * cfg.dt; }
};

/// Simulates and stores the base path over [0, T]: spin-up is stochastic from
/// omega = 0 when spin_up > 0, then `steps` recorded stochastic steps (or
/// decay-only when `deterministic`); the manifold point matches the variant.
BasePath simulate_base_path(const SolverConfig& cfg, const EvalScheme& scheme,
                            ProcessVariant variant, int steps, std::uint64_t seed,
                            std::uint64_t trajectory, double spin_up,
                            bool deterministic = false);

/// Heat-case base path: omega = 0 held for `steps` steps (closed-form tests).
BasePath zero_base_path(const SolverConfig& cfg, ProcessVariant variant, int steps);

/// Advances the linearized coupled system (eq. for (phi, tm)) one step along
/// the stored base path, from t_i to t_{i+1}; integrating-factor Heun matching
/// the base scheme, then confinement to the Galerkin ball.
/// VariantError if dir.tm size does not match spec.
void linearize_step(DirectionVector& dir, const BasePath& path, int step_index,
                    const GalerkinSpec& spec);

/// Columns are J_{s,t} applied to the Galerkin basis (H modes then tm axes),
/// expressed as coordinates in that basis; DimensionError above 4096.
Eigen::MatrixXd build_propagator(const BasePath& path, int i0, int i1,
                                 const GalerkinSpec& spec);

struct MalliavinMatrix {
    Eigen::MatrixXd M;     ///< symmetric PSD, basis = H modes + tm tangent basis
    double T = 0.0;
    std::uint64_t spec_hash = 0;
    int quad_points = 0;   ///< composite-Boole nodes actually used (4j+1)
    std::vector<WaveIndex> modes;
    std::vector<double> gram_diag;      ///< <e_k, e_k>_{H^n} per mode
    int tm_dim = 0;                     ///< tangent dimension (orthonormal block)
    std::vector<Eigen::VectorXd> tm_basis;  ///< ambient coords of the tm basis at p_T
    /// J_{r_i,T} e_j inner products against the basis, for the Gram-consistency
    /// identity <p, M p> = sum_k c_k^2 sum_i w_i <p, J e_k>^2.
    std::vector<double> quad_weights;
    std::vector<std::vector<Eigen::VectorXd>> propagated;  // [node][force-mode] -> q
};

/// M = sum_{k in F} c_k^2 sum_i w_i (J_{r_i,T} e_k)(J_{r_i,T} e_k)^T in the
/// <.,.>_{H^n x TM} geometry. Quadrature is composite Boole on step-aligned
/// uniform nodes; `quad_points` is rounded up to 4j+1 and must divide the path
/// steps evenly (node stride = steps / (m-1)).
MalliavinMatrix assemble_malliavin(const BasePath& path, const GalerkinSpec& spec,
                                   int quad_points);

/// Minimal Rayleigh quotient <p, M p>/||p||^2 over unit p in range(Pi_R):
/// identity on TM, modes with |k| <= R on the spectral block.
double projected_min_eigen(const MalliavinMatrix& M, int R);

/// Ambient Theta_{e_k}(p) direction for the nondegeneracy precondition check.
Eigen::VectorXd theta_direction(const WaveIndex& k, const GalerkinSpec& spec,
                                const CoupledState& base);

/// Dense row-major binary dump: magic "SNSM", dim, T, spec hash, payload.
void write_matrix(std::ostream& os, const MalliavinMatrix& M);

}  // namespace snsmix
