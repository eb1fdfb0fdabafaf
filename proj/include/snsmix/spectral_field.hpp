#pragma once

#include <complex>
#include <iosfwd>
#include <set>
#include <vector>

#include "snsmix/grid.hpp"

namespace snsmix {

/// Mean-zero real scalar field on [-pi,pi]^2 held as truncated Fourier
/// coefficients c_k with phi(x) = sum_k c_k e^{i k.x}. Invariants maintained
/// by every operation: Hermitian symmetry c_{-k} = conj(c_k), zero mean, and
/// c_k = 0 outside the dealias cutoff max(|k1|,|k2|) <= K.
class SpectralField {
  public:
    SpectralField() : SpectralField(GridSpec{}) {}
    explicit SpectralField(const GridSpec& grid);

    const GridSpec& grid() const { return grid_; }
    int n() const { return grid_.n; }
    int cutoff() const { return grid_.cutoff(); }

    bool retained(const WaveIndex& k) const {
        const int K = cutoff();
        return std::abs(k.kx) <= K && std::abs(k.ky) <= K && !(k.kx == 0 && k.ky == 0);
    }

    std::complex<double> coeff(const WaveIndex& k) const {
        if (!retained(k)) return {0.0, 0.0};
        return data_[flat(k)];
    }

    /// Sets c_k and c_{-k} = conj(z) together (the only mutation path that
    /// external code should use; keeps Hermitian symmetry exact).
    void set_mode_pair(const WaveIndex& k, std::complex<double> z);
    void add_mode_pair(const WaveIndex& k, std::complex<double> z);

    void clear();
    bool is_zero() const;

    // in-place algebra
    SpectralField& operator+=(const SpectralField& o);
    SpectralField& operator-=(const SpectralField& o);
    SpectralField& operator*=(double s);
    /// this += a * o
    void axpy(double a, const SpectralField& o);

    /// max_k |c_k|; infinity/NaN propagate (blow-up detection).
    double max_abs_coeff() const;
    bool all_finite() const;

    /// Pointwise value by direct mode sum (exact for the truncated field).
    double eval(double x, double y) const;

    /// Zeroes modes outside the cutoff and the mean mode.
    void enforce_truncation();

    // raw storage access for transform/product kernels
    std::vector<std::complex<double>>& raw() { return data_; }
    const std::vector<std::complex<double>>& raw() const { return data_; }
    int flat(const WaveIndex& k) const {
        const int a = k.kx >= 0 ? k.kx : k.kx + grid_.n;
        const int b = k.ky >= 0 ? k.ky : k.ky + grid_.n;
        return a * grid_.n + b;
    }
    WaveIndex unflat(int idx) const {
        int a = idx / grid_.n, b = idx % grid_.n;
        return {a <= grid_.n / 2 ? a : a - grid_.n, b <= grid_.n / 2 ? b : b - grid_.n};
    }

  private:
    GridSpec grid_;
    std::vector<std::complex<double>> data_;  // n*n row-major, FFT index order
};

/// Divergence-free velocity field as a component pair.
struct VelocityField {
    SpectralField u1;
    SpectralField u2;
};

// --- basis and calculus ------------------------------------------------------

/// Real Fourier basis mode: sin(k.x) if k > (0,0) lexicographically, else
/// cos(k.x). Throws CutoffError if k is not retained by the grid.
SpectralField make_basis_mode(const WaveIndex& k, const GridSpec& grid);

/// Pointwise e_k(x) (no grid involved).
double eval_basis_mode(const WaveIndex& k, double x, double y);

/// ||e_k||_{L^2}^2 = 2 pi^2 for every k != 0.
inline double basis_mode_l2sq() { return 2.0 * kPi * kPi; }

/// u = grad^perp Lap^{-1} omega with grad^perp = (-d2, d1); div u = 0 and
/// curl(u) = omega exactly in coefficient space.
VelocityField biot_savart(const SpectralField& omega);

/// d1 u2 - d2 u1.
SpectralField curl(const VelocityField& u);

/// Partial derivative along axis (0 or 1): multiply by i k_axis.
SpectralField derivative(const SpectralField& f, int axis);

/// Homogeneous Sobolev norm ((2pi)^2 sum |k|^{2s} |c_k|^2)^{1/2}; s = 0 is the
/// physical L^2 norm. Negative s is well-defined on mean-zero fields.
double sobolev_norm(const SpectralField& f, double s);

/// ||u||_{H^{s}} of a velocity pair = (sum of component squares)^{1/2}.
double sobolev_norm(const VelocityField& u, double s);

/// ||Pi_{<=N} f||_{L^2}^2, projection onto |k| <= N (Euclidean norm).
double cumulative_l2sq(const SpectralField& f, double N);

/// Advective term u . grad(phi), pseudo-spectral with 2/3-rule dealiasing;
/// result is mean-zero.
SpectralField advection_term(const VelocityField& u, const SpectralField& phi);

/// (grad^perp Lap^{-1} omega) . grad omega; vanishes on single modes.
SpectralField nonlinear_term(const SpectralField& omega);

// --- transforms --------------------------------------------------------------

/// Physical samples at x_j = -pi + 2 pi j / n (row-major over (j1, j2)).
/// Imaginary parts are O(1e-16) for Hermitian input; callers read .real().
void to_physical(const SpectralField& f, std::vector<std::complex<double>>& phys);

/// Inverse of to_physical up to truncation: forward transform, truncation
/// enforced (dealias + mean-zero + Hermitian clean-up).
SpectralField from_physical(const GridSpec& grid, std::vector<std::complex<double>>& phys);

// --- forcing-mode combinatorics ---------------------------------------------

/// The finite forced-mode set F with amplitudes c_k.
struct ForcingSet {
    std::vector<WaveIndex> modes;  // canonical lex order
    std::vector<double> amps;      // same order

    std::size_t size() const { return modes.size(); }
    double max_mode_norm() const;

    /// Throws AssumptionError naming the violated clause: F = -F; exist
    /// |k| != |j|; Z-linear span of F equals Z^2; c_k != 0; c_{-k} = c_k.
    void validate() const;

    /// Index of k in modes; -1 if absent.
    int find(const WaveIndex& k) const;
};

/// F = {+-(1,0), +-(1,1)}, c = 1: the minimal Assumption-1 set.
ForcingSet default_forcing();

/// Fixpoint of A_{j+1} = A_j u {k+j : k in A_j, j in F, |k| != |j|,
/// k.j^perp != 0} intersected with {0 < |k| <= R}. iterations_out (optional)
/// receives the number of sweeps until the set {|k| <= R} stabilized.
std::set<WaveIndex, WaveIndexLess> spanning_closure(const ForcingSet& F, int R,
                                                    int* iterations_out = nullptr);

/// B_{k,j} = grad^perp Lap^{-1} e_j . grad e_k + grad^perp Lap^{-1} e_k . grad e_j,
/// expanded exactly in coefficient space; supported on {k+j, k-j} and zero
/// when k x j = 0 or |k| = |j|.
SpectralField bracket_field(const WaveIndex& k, const WaveIndex& j, const GridSpec& grid);

// --- serialization ------------------------------------------------------------

inline constexpr std::uint32_t kFieldFormatVersion = 1;

/// Versioned little-endian binary layout: magic "SNSF", version, n, cutoff,
/// then (2K+1)^2 packed complex coefficients in (k1,k2) row-major order.
void write_field(std::ostream& os, const SpectralField& f);
SpectralField read_field(std::istream& is);

/// Lossy physical-grid CSV (x,y,value) for inspection.
void export_physical_csv(std::ostream& os, const SpectralField& f);

}  // namespace snsmix
