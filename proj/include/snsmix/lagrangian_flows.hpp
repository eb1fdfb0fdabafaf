#pragma once

#include <Eigen/Dense>
#include <optional>
#include <variant>
#include <vector>

#include "snsmix/sns_dynamics.hpp"

namespace snsmix {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Compensated 2x2 determinant (Kahan, FMA-based): relative error O(eps)
/// even under heavy cancellation, unlike ad - bc at large condition numbers.
double det2_accurate(const Eigen::Matrix2d& A);

/// Wraps a coordinate to [-pi, pi).
double wrap_angle(double x);
Vec2 wrap_point(const Vec2& x);
/// Minimal-image displacement b - a on the torus.
Vec2 torus_displacement(const Vec2& a, const Vec2& b);
double torus_distance(const Vec2& a, const Vec2& b);

// --- Table-1 manifold points -------------------------------------------------

struct OnePoint {
    Vec2 x;
};

struct TwoPoint {
    Vec2 x;
    Vec2 y;
    Vec2 lift;  ///< continuous lift of y - x (minimal image at construction)
};

struct Tangent {
    Vec2 x;
    Vec2 tau;  ///< nonzero tangent vector
};

struct Projective {
    Vec2 x;
    Vec2 v;  ///< unit vector on S^1
};

/// Flow derivative in factored QR form: A = Q(theta) [[e^l1, rho e^l1],
/// [0, e^l2]]. A raw 2x2 double matrix loses its determinant at relative
/// eps * cond(A) = eps * e^{2 lambda t}, so the SL(2) constraint is carried
/// structurally: the scales live in log space and det A = e^{l1 + l2}
/// (times e^{2 log_accum} after renormalization) is conserved by scalar
/// bookkeeping rather than matrix arithmetic.
struct JacobianPt {
    Vec2 x;
    double theta = 0.0;  ///< rotation angle of Q
    double l1 = 0.0;     ///< log of the leading triangular scale
    double rho = 0.0;    ///< off-diagonal of R relative to e^l1
    double l2 = 0.0;     ///< log of the trailing scale

    static JacobianPt from_matrix(const Vec2& x, const Mat2& A);
    Mat2 matrix() const;           ///< reconstructed A (may overflow for huge l1)
    double log_det() const { return l1 + l2; }
    double log_opnorm() const;     ///< log of the largest singular value
};

using ManifoldPoint = std::variant<OnePoint, TwoPoint, Tangent, Projective, JacobianPt>;

/// det(true A) - 1 for the factored cocycle, exact in the log coordinates.
double sl2_det_defect(const JacobianPt& p, double log_accum);

enum class ProcessVariant { Base, OnePoint, TwoPoint, Tangent, Projective, Jacobian };

TwoPoint make_two_point(const Vec2& x, const Vec2& y);

/// Flat encoding for checkpoints: tag 1..5 over the Table-1 variants plus the
/// coordinate payload (TwoPoint stores x, y and the lift).
std::pair<std::uint8_t, std::vector<double>> pack_point(const ManifoldPoint& p);
ManifoldPoint unpack_point(std::uint8_t tag, const std::vector<double>& coords);

// --- off-grid field evaluation -------------------------------------------------

struct VelocityJet {
    Vec2 u = Vec2::Zero();
    Mat2 grad = Mat2::Zero();     ///< grad(i,j) = d_i u_j (row convention: tau' = tau . grad u)
    double hess[2][2][2] = {};    ///< hess[i][j][c] = d_i d_j u_c
};

enum class EvalMode { PaddedBicubic, DirectSum };

struct EvalScheme {
    EvalMode mode = EvalMode::PaddedBicubic;
    int pad_factor = 4;

    void validate() const {
        if (pad_factor < 4) throw ConfigError("EvalScheme: pad_factor >= 4 required");
    }
};

/// Evaluates (u, grad u, grad^2 u) of the velocity induced by a vorticity
/// field at off-grid points. Construction cost is per-snapshot: DirectSum is
/// free to build and exact; PaddedBicubic transforms the 12 component fields
/// once onto a pad_factor-refined grid and interpolates (documented error
/// ~ (|k| h_pad)^4 / 24 relative per mode).
class VelocitySampler {
  public:
    VelocitySampler(const SpectralField& omega, const EvalScheme& scheme);

    /// Synthetic test hook: linear velocity u(x) = x . G (constant gradient,
    /// zero Hessian), bypassing any field.
    static VelocitySampler synthetic_linear(const Mat2& grad);

    VelocityJet eval(const Vec2& x) const;
    /// trace(grad u); 0 to fp for spectral fields (incompressibility).
    double divergence_at(const Vec2& x) const;

  private:
    VelocitySampler() = default;
    VelocityJet eval_direct(const Vec2& x) const;
    VelocityJet eval_padded(const Vec2& x) const;

    bool synthetic_ = false;
    Mat2 synthetic_grad_ = Mat2::Zero();
    EvalScheme scheme_;
    // direct-sum representation
    int cutoff_ = 0;
    struct ModeEntry {
        int kx, ky;
        std::complex<double> u1, u2;  // velocity coefficients
    };
    std::vector<ModeEntry> modes_;
    // padded-grid representation: 12 scalar fields sampled on the fine grid
    int fine_n_ = 0;
    std::vector<double> fine_;  // [field][a*fine_n+b], 12 fields concatenated
};

// --- coupled stepping ------------------------------------------------------------

struct CoupledState {
    VorticityState vorticity;
    ManifoldPoint point;
    double log_accum = 0.0;  ///< factored log-norms (Tangent/Jacobian)
};

ProcessVariant variant_of(const ManifoldPoint& p);

/// Heun step of the Table-1 manifold ODE using field snapshots at the two
/// stage times. Tangent/Jacobian share the one-step propagator
/// P = I + dt/2 (G1+G2) + dt^2/2 G1 G2, the Jacobian branch normalized to
/// det P = 1 so det A is conserved to roundoff.
void heun_advance_point(ManifoldPoint& p, const VelocitySampler& s_old,
                        const VelocitySampler& s_new, double dt);

/// Field-then-particles splitting: the vorticity advances one dt first, then
/// the manifold ODE takes a Heun step using field snapshots at t and t+dt.
class CoupledStepper {
  public:
    CoupledStepper(const SolverConfig& cfg, const EvalScheme& scheme);

    const SolverConfig& config() const { return cfg_; }

    void step_stochastic(CoupledState& s, NoiseStream& noise);
    void step_controlled(CoupledState& s, const ControlProgram& prog);
    void step_decay(CoupledState& s);

    /// Test hook: advances only the manifold point under a frozen sampler.
    static void advance_point_frozen(ManifoldPoint& p, const VelocitySampler& sampler,
                                     double dt);

  private:
    void advance_point(CoupledState& s, const SpectralField& omega_old,
                       const SpectralField& omega_new);

    SolverConfig cfg_;
    EvalScheme scheme_;
    SnsStepper stepper_;
    SpectralField omega_prev_;
};

/// Projective: v normalized. Tangent/Jacobian: when the norm exceeds the
/// threshold, a scalar (Tangent) or the leading QR scale (Jacobian) is
/// factored into log_accum; the Jacobian branch also re-projects det A to 1.
/// Growth estimators are threshold-independent; entry rounding perturbs
/// det(A) by ~ ||A||^2 eps per step, so runs that must hold det to 1e-9
/// should factor at ||A|| ~ 1e2-1e3 rather than the 1e6 default.
void renormalize(CoupledState& s, double threshold = 1e6);

// --- tangent vs two-point approximation ---------------------------------------

struct GapReport {
    double r0 = 0.0;
    double sup_gap_mean = 0.0;       ///< E sup_{t<=1} |tau_t - (y_t-x_t)/r0|
    double sup_ratio_mean = 0.0;     ///< E sup_{t<=1} max(|y-x|/r0, r0/|y-x|)
    double sup_ratio_p95 = 0.0;
    std::vector<double> per_path_gap;
    std::vector<double> per_path_grad_integral;  ///< int_0^T ||grad u||_inf-proxy along path
};

/// Same-noise paired runs of the two-point process (separation r0 along tau0)
/// and the tangent process from (x0, tau0), over [0, T].
GapReport tangent_vs_twopoint_gap(const SolverConfig& cfg, const EvalScheme& scheme,
                                  double r0, double T, int ensemble, std::uint64_t seed,
                                  double spin_up = 10.0);

}  // namespace snsmix
